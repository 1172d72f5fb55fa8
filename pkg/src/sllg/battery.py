"""Identity and estimate battery run by ``sllg verify``.

Every check returns a ``Check`` with a measured value and the tolerance it
was held to.  The algebraic checks use random band-limited fields; the
dynamic checks run small ensembles built from the configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diagnostics as dg
from .config import SimConfig
from .families import noise_field
from .llg import LLGSystem, PhysParams
from .sde import SchemeConfig, generate_path, integrate, path_seed
from .spectral import Domain, GridField, SpectralField, cross3, dot3

PASS, FAIL, SKIPPED = "PASS", "FAIL", "SKIPPED"


@dataclass
class Check:
    name: str
    status: str
    value: float | None = None
    tolerance: float | None = None
    detail: str = ""

    @property
    def ok(self):
        return self.status != FAIL

    def line(self):
        val = "-" if self.value is None else f"{self.value:.3e}"
        tol = "-" if self.tolerance is None else f"{self.tolerance:.1e}"
        text = f"{self.status:<8}{self.name:<30} value={val:<10} tol={tol:<8}"
        return text + (f" {self.detail}" if self.detail else "")


def _check(name, value, tol, detail="", smaller=True):
    ok = value <= tol if smaller else value >= tol
    return Check(name, PASS if ok and math.isfinite(value) else FAIL, float(value), tol, detail)


def _rel(a, b, scale):
    return float(np.max(np.abs(a - b) / np.maximum(scale, 1e-300)))


def random_coeffs(domain, count, rng):
    """Random band-limited fields with an ``(1 + mu)^-1`` spectral decay."""
    c = rng.standard_normal((count,) + domain.coeff_shape)
    return c / (1.0 + domain.eigenvalues[..., None] / max(domain.eigenvalues.max(), 1.0) * 8.0)


# algebraic checks ------------------------------------------------------------


def check_transforms(domain, count=200, seed=0):
    rng = np.random.default_rng(seed)
    c = random_coeffs(domain, count, rng)
    grid = domain.to_grid(c)
    quad = np.sqrt(domain.grid_inner(grid, grid))
    coef = np.sqrt(domain.coeff_inner(c, c))
    back = domain.to_coeffs(grid)
    return [
        _check("parseval", _rel(quad, coef, coef), 1e-10),
        _check("round_trip", float(np.max(np.abs(back - c))), 1e-12),
    ]


def vector_identity_violation(a, b, c, d):
    """Largest relative violation of the pointwise vector identities; inputs ``(..., 3)``."""
    na, nb, nc, nd = (np.linalg.norm(x, axis=-1) for x in (a, b, c, d))
    s4 = na * nb * nc * nd
    s3 = na * nb * nc
    viol = [
        np.abs(dot3(cross3(a, cross3(b, c)), d) - dot3(c, cross3(cross3(d, a), b))) / s4,
        np.abs(dot3(cross3(a, b), c) - dot3(b, cross3(c, a))) / s3,
        np.abs(-dot3(cross3(a, b), c) - dot3(b, cross3(a, c))) / s3,
        np.linalg.norm(cross3(a, cross3(b, c)) - (dot3(a, c)[..., None] * b - dot3(a, b)[..., None] * c),
                       axis=-1) / s3,
        np.maximum(np.linalg.norm(cross3(a, b), axis=-1) - na * nb, 0.0) / (na * nb),
        np.abs(dot3(cross3(a, cross3(a, b)), b) + dot3(cross3(a, b), cross3(a, b))) / (na * nb) ** 2,
    ]
    # orthogonal cases: make b perpendicular to a
    bp = b - (dot3(a, b) / dot3(a, a))[..., None] * a
    nbp = np.linalg.norm(bp, axis=-1)
    viol.append(np.linalg.norm(cross3(cross3(a, bp), bp) + (nbp ** 2)[..., None] * a, axis=-1) / (na * nbp ** 2))
    viol.append(np.linalg.norm(cross3(a, cross3(a, bp)) + (na ** 2)[..., None] * bp, axis=-1) / (na ** 2 * nbp))
    return float(max(np.max(v) for v in viol))


def check_vector_identities(domain, count=200, seed=1):
    rng = np.random.default_rng(seed)
    fields = [domain.to_grid(random_coeffs(domain, count, rng)) for _ in range(4)]
    return _check("vector_identities", vector_identity_violation(*fields), 1e-13)


def operator_identity_violations(domain, coeffs, hvec=(0.0, 0.0, 1.0)):
    """Relative violations of the skew and energy pairings of the Galerkin operators.

    ``coeffs`` is a batch ``(count, *modes, 3)``.  Returns a dict of maxima.
    """
    h = GridField(domain, np.broadcast_to(np.asarray(hvec, float), domain.grid_shape).copy())
    system = LLGSystem(PhysParams(1.0, 1.0, 1.0, h))
    u = coeffs
    lap = domain.laplacian_coeffs(u)
    nu = np.sqrt(domain.coeff_inner(u, u))
    nl = np.sqrt(domain.coeff_inner(lap, lap))
    f1, f2, g = system.f1(u), system.f2(u), system.g(u)
    nrm = lambda x: np.sqrt(domain.coeff_inner(x, x))
    X = system.cross_lap_sq(u)
    out = {
        "skew_f1": np.max(np.abs(domain.coeff_inner(f1, u)) / (nrm(f1) * nu + 1e-300)),
        "skew_f2": np.max(np.abs(domain.coeff_inner(f2, u)) / (nrm(f2) * nu + 1e-300)),
        "skew_g": np.max(np.abs(domain.coeff_inner(g, u)) / (nrm(g) * nu + 1e-300)),
        "f1_laplacian": np.max(np.abs(domain.coeff_inner(f1, lap)) / (nrm(f1) * nl + 1e-300)),
        "f2_laplacian": np.max(np.abs(domain.coeff_inner(f2, lap) + X) / (X + 1e-300)),
    }
    # Ito correction pairing against the unprojected expression, constant h
    H = np.asarray(hvec, float)
    U = domain.to_grid(u)
    expr = domain.to_coeffs(dot3(U, H)[..., None] * H - dot3(H, H) * U)
    lhs = np.abs(domain.coeff_inner(system.g2(u), lap))
    rhs = np.abs(domain.coeff_inner(expr, lap))
    out["ito_pairing_excess"] = np.max(np.maximum(lhs - rhs, 0.0) / (rhs + 1e-300))
    return {k: float(v) for k, v in out.items()}


def check_operators(domain, count=200, seed=2, hvec=(0.0, 0.0, 1.0)):
    rng = np.random.default_rng(seed)
    v = operator_identity_violations(domain, random_coeffs(domain, count, rng), hvec)
    return [
        _check("skew_orthogonality", max(v["skew_f1"], v["skew_f2"], v["skew_g"]), 1e-12),
        _check("laplacian_pairings", max(v["f1_laplacian"], v["f2_laplacian"]), 1e-10),
        _check("ito_correction_pairing", v["ito_pairing_excess"], 1e-12),
    ]


def check_green(domain, count=50, seed=3):
    rng = np.random.default_rng(seed)
    worst, worst_sym = 0.0, 0.0
    for c, d in zip(random_coeffs(domain, count, rng), random_coeffs(domain, count, rng)):
        lhs, r1, r2, sym = dg.green_identity_terms(SpectralField(domain, c), SpectralField(domain, d))
        scale = max(abs(lhs), abs(r1), abs(r2), 1e-300)
        worst = max(worst, abs(lhs - r1) / scale, abs(lhs - r2) / scale)
        worst_sym = max(worst_sym, abs(sym) / scale)
    return [_check("green_identities", worst, 1e-8), _check("gradient_symmetry", worst_sym, 1e-12)]


def interpolation_excess(domain, cu, cv):
    """Largest ``lhs / rhs - 1`` over the Holder and L^2-L^6 interpolation bounds."""
    U, V = domain.to_grid(cu), domain.to_grid(cv)
    W = cross3(U, V)
    lp = domain.grid_lp
    u2, u6, v2 = lp(U, 2.0), lp(U, 6.0), lp(V, 2.0)
    worst = lp(W, 1.0) / (u2 * v2) - 1.0
    for r in (1.0, 6.0 / 5.0, 1.5):
        bound = u2 ** (3.0 / r - 2.0) * u6 ** (3.0 - 3.0 / r) * v2
        worst = np.maximum(worst, lp(W, r) / bound - 1.0)
    return float(np.max(worst))


def check_inequalities(domain, count=200, seed=4, hvec=(0.0, 0.0, 1.0), hgrid=None):
    rng = np.random.default_rng(seed)
    cu, cv = random_coeffs(domain, count, rng), random_coeffs(domain, count, rng)
    if hgrid is None:
        hgrid = np.broadcast_to(np.asarray(hvec, float), domain.grid_shape).copy()
    system = LLGSystem(PhysParams(1.0, 1.0, 1.0, GridField(domain, hgrid)))
    g = system.g(cu)
    hinf = float(np.max(np.linalg.norm(hgrid, axis=-1)))
    ratio = np.sqrt(domain.coeff_inner(g, g)) / (hinf * np.sqrt(domain.coeff_inner(cu, cu)))
    return [
        _check("interpolation_inequalities", max(interpolation_excess(domain, cu, cv), 0.0), 1e-12),
        _check("noise_operator_bound", max(float(np.max(ratio)) - 1.0, 0.0), 1e-12),
    ]


# dynamic checks --------------------------------------------------------------


def _paths(T, dt, master, count, offset=0):
    return [generate_path(T, dt, path_seed(master, offset + i)) for i in range(count)]


def deterministic_balance(cfg, params, u0, dts, T):
    """Energy-balance residual at ``T`` (lambda3 = 0) and the worst energy increase."""
    p0 = params.replace(lambda3=0.0)
    residuals, worst_rise = [], -math.inf
    for dt in dts:
        traj = integrate(u0, p0, _paths(T, dt, 0, 1), SchemeConfig("midpoint"))
        e = traj.observables["energy"][:, 0]
        worst_rise = max(worst_rise, float(np.max(np.diff(e))))
        residuals.append(abs(float(dg.energy_balance(traj, p0).residual[-1, 0])))
    return residuals, worst_rise


def rotation_params(domain, lambda3=1.0):
    h = noise_field(domain, "constant", (0.0, 0.0, 1.0))
    return PhysParams(0.0, 0.0, lambda3, h, allow_degenerate=True)


def rotation_u0(domain):
    c = np.zeros(domain.coeff_shape)
    c[(0,) * domain.dim + (0,)] = math.sqrt(domain.volume)
    return SpectralField(domain, c)


def run_battery(cfg: SimConfig, *, force_lambda2_zero=False, normalization=1.0,
                samples=200, paths=100, balance_halvings=4):
    """All checks for ``cfg``; the two keyword hooks exist for negative controls."""
    d = cfg.domain
    base = cfg.build_domain()
    dom = Domain(base.lengths, base.modes, base.grid, normalization)
    hvec = cfg.physics.h_vector if cfg.physics.h_family == "constant" else (0.0, 0.0, 1.0)
    checks = []
    checks += check_transforms(dom, samples)
    checks.append(check_vector_identities(base, samples))
    checks += check_operators(base, samples, hvec=hvec)
    checks += check_green(base.with_grid(tuple(4 * n for n in d.n)), max(10, samples // 4))
    checks += check_inequalities(base, samples, hgrid=cfg.build_params(base).h.values)

    params = cfg.build_params(base)
    if force_lambda2_zero:
        params = params.replace(lambda2=0.0, allow_degenerate=True)
    u0 = cfg.build_u0(base)
    sc = cfg.scheme_config()
    T, dt = cfg.time.T, cfg.time.dt
    master = cfg.ensemble.master_seed

    traj = integrate(u0, params, _paths(T, dt, master, min(paths, 16)), sc, on_failure="record")
    ok = traj.select(traj.ok_paths())
    if ok.num_paths:
        drift = float(np.max(dg.apriori_statistics(ok, params)["l2_drift"])) if sc.scheme == "midpoint" \
            else float(np.max(np.abs(ok.observables["l2"] / ok.observables["l2"][:1] - 1)))
    else:
        drift = math.inf
    checks.append(_check("l2_conservation", drift, 1e-8 if sc.scheme == "midpoint" else 1e-2,
                         f"{len(traj.failures)} failed paths"))

    if params.lambda2 <= 0:
        checks.append(Check("dissipation_monotone", SKIPPED, detail="lambda2 = 0"))
        checks.append(Check("energy_balance_slope", SKIPPED, detail="lambda2 = 0"))
    else:
        dts = [dt / 2 ** k for k in range(balance_halvings + 1)]
        T_bal = min(T, 0.1)
        res, rise = deterministic_balance(cfg, params, u0, dts, T_bal)
        checks.append(_check("dissipation_monotone", rise, 1e-8))
        slope = float(np.polyfit(np.log(dts), np.log(res), 1)[0])
        checks.append(Check("energy_balance_slope", PASS if abs(slope - 2) <= 0.2 else FAIL,
                            slope, 0.2, "target 2"))

    big = integrate(u0, params, _paths(T, dt, master, paths), sc, on_failure="record")
    big = big.select(big.ok_paths())
    bal = dg.energy_balance(big, params)
    m, se = dg.mean_se(bal.residual_ito[-1])
    checks.append(_check("energy_balance_mean", abs(m) / se if se > 0 else 0.0, 3.0,
                         f"mean={m:.3e} se={se:.3e} (in SE units)"))
    mart = dg.martingale_diagnostics(big, params, min_paths=min(paths, dg.MIN_MARTINGALE_PATHS))
    z = max(pr.zero_mean_z for pr in mart.probes)
    checks.append(_check("martingale_zero_mean", z, 3.0, "max |mean|/se over probes"))

    rot = rotation_params(base)
    rtraj = integrate(rotation_u0(base), rot, _paths(T, dt, master, paths), SchemeConfig("midpoint"))
    probe = np.zeros(base.coeff_shape)
    probe[(0,) * base.dim + (1,)] = -1.0
    rm = dg.martingale_diagnostics(rtraj, rot, [probe], min_paths=min(paths, dg.MIN_MARTINGALE_PATHS))
    r = rm.probes[0].qv_ratio
    checks.append(Check("quadratic_variation_ratio", PASS if 0.95 <= r <= 1.05 else FAIL, r, 0.05,
                        f"ci95=[{rm.probes[0].qv_ratio_ci[0]:.4f}, {rm.probes[0].qv_ratio_ci[1]:.4f}];"
                        f" half-factor convention gives {rm.probes[0].qv_ratio_half_factor:.4f}"))
    return checks
