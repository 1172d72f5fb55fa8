"""Independent reference values used by the test suite.

Nothing here imports ``sllg``: every value is computed from closed forms,
adaptive quadrature (``scipy.integrate.quad``) or a plain scalar Monte
Carlo simulation.  Run it to regenerate the constants frozen in the tests::

    python scripts/oracles.py
"""

import math

import numpy as np
from scipy.integrate import dblquad, quad


def e(k, L=1.0):
    if k == 0:
        return lambda x: 1.0 / math.sqrt(L)
    return lambda x: math.sqrt(2.0 / L) * math.cos(k * math.pi * x / L)


def coeff(f, k, L=1.0):
    return quad(lambda x: f(x) * e(k, L)(x), 0.0, L, limit=200, epsabs=1e-13, epsrel=1e-12)[0]


def cross(a, b):
    return np.cross(a, b)


def galerkin_example():
    """u = e_0 (1,0,0) + e_1 (0,1,0) on [0, 1] and its nonlinear terms."""
    def u(x):
        return np.array([e(0)(x), e(1)(x), 0.0])

    def lap(x):  # Laplacian of u, analytically
        return np.array([0.0, -math.pi ** 2 * e(1)(x), 0.0])

    f1 = lambda x: cross(u(x), lap(x))
    f2 = lambda x: cross(u(x), cross(u(x), lap(x)))
    out = {}
    for name, f in (("f1", f1), ("f2", f2)):
        for comp in range(3):
            for k in range(4):
                v = coeff(lambda x: f(x)[comp], k)
                if abs(v) > 1e-12:
                    out[f"{name}[mode {k}, comp {'xyz'[comp]}]"] = v
    return out


def besov_linear(T, alpha, q, v_norm):
    """W^{alpha,q} norm of t -> t v: Lebesgue part plus the double integral in closed form."""
    beta = q * (1 - alpha) - 1
    semi = 2 * T ** (beta + 2) / ((beta + 1) * (beta + 2))
    leb = T ** (q + 1) / (q + 1)
    return (v_norm ** q * (leb + semi)) ** (1.0 / q)


def besov_linear_quadrature(T, alpha, q):
    beta = q * (1 - alpha) - 1
    semi = dblquad(lambda s, t: abs(t - s) ** beta, 0, T, 0, T, epsabs=1e-12)[0]
    return semi


def rotation_monte_carlo(T=1.0, paths=200_000, seed=12345):
    """E cos W(T) and E |u(T) - u0|^2 for u(t) = (cos W, -sin W, 0) by direct sampling."""
    rng = np.random.default_rng(seed)
    W = math.sqrt(T) * rng.standard_normal(paths)
    dist = (np.cos(W) - 1.0) ** 2 + np.sin(W) ** 2
    return float(np.mean(np.cos(W))), float(np.mean(dist))


def cayley_rotation(u, h, dW):
    """Implicit midpoint step of the linear system du = (u x h) dW."""
    K = np.array([[0.0, h[2], -h[1]], [-h[2], 0.0, h[0]], [h[1], -h[0], 0.0]])  # K v = v x h
    I = np.eye(3)
    return np.linalg.solve(I - 0.5 * dW * K, (I + 0.5 * dW * K) @ u)


def main():
    print("analyze cos^2(pi x) on [0,1]:")
    c2 = lambda x: math.cos(math.pi * x) ** 2
    print(f"  mode 0 = {coeff(c2, 0):.17g}")
    print(f"  mode 2 = {coeff(c2, 2):.17g}")
    print("Galerkin example terms:")
    for k, v in galerkin_example().items():
        print(f"  {k} = {v:.17g}")
    print("Laplacian eigenvalue, finite differences of cos(pi x) at x = 0.3:")
    h = 1e-4
    f = lambda x: math.cos(math.pi * x)
    fd = (f(0.3 + h) - 2 * f(0.3) + f(0.3 - h)) / h ** 2 / f(0.3)
    print(f"  mu_1 ~ {-fd:.10g} (pi^2 = {math.pi ** 2:.17g})")
    fxy = lambda x, y: math.cos(math.pi * x) * math.cos(math.pi * y)
    fd2 = ((fxy(0.3 + h, 0.4) - 2 * fxy(0.3, 0.4) + fxy(0.3 - h, 0.4))
           + (fxy(0.3, 0.4 + h) - 2 * fxy(0.3, 0.4) + fxy(0.3, 0.4 - h))) / h ** 2 / fxy(0.3, 0.4)
    print(f"  mu_(1,1) ~ {-fd2:.10g} (2 pi^2 = {2 * math.pi ** 2:.17g})")
    print("Norms of e_0 (1,0,0) + e_1 (0,1,0):")
    l2 = math.sqrt(quad(lambda x: e(0)(x) ** 2 + e(1)(x) ** 2, 0, 1)[0])
    h1 = math.sqrt(quad(lambda x: (math.sqrt(2) * math.pi * math.sin(math.pi * x)) ** 2, 0, 1)[0])
    print(f"  L2 = {l2:.17g}, H1 seminorm = {h1:.17g}")
    print("Besov norm of t -> t v, |v| = 1, T = 1, alpha = 3/8, q = 9:")
    beta = 9 * (1 - 0.375) - 1
    print(f"  closed-form double integral = {2 / ((beta + 1) * (beta + 2)):.17g}")
    print(f"  quadrature double integral  = {besov_linear_quadrature(1.0, 0.375, 9.0):.17g}")
    print(f"  full norm = {besov_linear(1.0, 0.375, 9.0, 1.0):.17g}")
    print(f"  alpha = 1/2, q = 2: {besov_linear(1.0, 0.5, 2.0, 1.0):.17g}")
    print("Rotation case, T = 1:")
    mc_cos, mc_dist = rotation_monte_carlo()
    print(f"  E cos W(T)        closed form {math.exp(-0.5):.17g}  scalar MC {mc_cos:.6f}")
    print(f"  E|u(T) - u0|^2    closed form {2 * (1 - math.exp(-0.5)):.17g}  scalar MC {mc_dist:.6f}")
    print("Cayley rotation, u = (1,0,0), h = (0,0,1), dW = 0.1:")
    print("  ", [f"{v:.17g}" for v in cayley_rotation(np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), 0.1)])


if __name__ == "__main__":
    main()
