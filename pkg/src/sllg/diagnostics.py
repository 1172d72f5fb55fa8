"""Numerical witnesses for the identities and estimates of the Galerkin flow.

Time quadrature follows the calculus each object needs: trapezoid for
Lebesgue integrals, endpoint-averaged (Stratonovich) sums for ``o dW``
integrals and left-point (Ito) sums for Ito integrals.  All functions take a
batched ``Trajectory`` and return per-path arrays; failed paths should be
dropped with ``Trajectory.select(traj.ok_paths())`` beforehand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError, InsufficientDataError, StatisticalPowerError
from .llg import LLGSystem
from .spectral import Domain, GridField, SpectralField, cross3

MIN_MARTINGALE_PATHS = 100
# probes whose total predicted QV is below this fraction of the largest one
# only see roundoff, and get no QV ratio
QV_NEGLIGIBLE = 1e-12
Z95 = 1.959963984540054


@dataclass
class ObservableSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape[0] != self.values.shape[0]:
            raise ConfigError("times and values must have equal length")
        if self.times.size and self.times[0] != 0.0:
            raise ConfigError("observable series must start at t = 0")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError("times must be increasing")


def series(traj, name, path=0):
    return ObservableSeries(traj.times, traj.observables[name][:, path])


def mean_se(x):
    """Mean and standard error along axis 0."""
    x = np.asarray(x, dtype=float)
    m = x.mean(axis=0)
    if x.shape[0] < 2:
        return m, np.full_like(m, np.nan)
    return m, x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


def _system(p):
    return p if isinstance(p, LLGSystem) else LLGSystem(p)


def _need_snapshots(traj, max_stride):
    if traj.coeffs is None:
        raise InsufficientDataError("trajectory was recorded without snapshots")
    if traj.stride > max_stride or len(traj.steps) < 2:
        raise InsufficientDataError(
            f"recording stride {traj.stride} too sparse (need <= {max_stride})")


def recorded_increments(traj):
    """Brownian increments summed over each recorded interval, shape ``(K-1, paths)``."""
    return np.add.reduceat(traj.dW, traj.steps[:-1], axis=0)


def _cumtrap(y, t):
    return cumulative_trapezoid(y, t, axis=0, initial=0.0)


def _cum_strat(f, dW):
    """Stratonovich sums with endpoint-averaged integrand; ``f`` has shape ``(K, ...)``."""
    inc = 0.5 * (f[1:] + f[:-1]) * dW.reshape(dW.shape + (1,) * (f.ndim - 2))
    return np.concatenate([np.zeros_like(f[:1]), np.cumsum(inc, axis=0)])


def _cum_ito(f, dW):
    inc = f[:-1] * dW.reshape(dW.shape + (1,) * (f.ndim - 2))
    return np.concatenate([np.zeros_like(f[:1]), np.cumsum(inc, axis=0)])


# energy balance -------------------------------------------------------------


@dataclass
class BalanceReport:
    """Residuals of the gradient-energy balance along each path, shape ``(K, paths)``.

    ``residual`` uses dissipation coefficient ``lambda2``; ``residual_squared_coeff``
    the alternative ``lambda2**2``.  ``residual_ito`` is the Ito-form balance
    with its two correction integrals and a left-point stochastic sum.
    """

    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    stochastic: np.ndarray
    residual: np.ndarray
    residual_squared_coeff: np.ndarray
    residual_ito: np.ndarray
    lambda2: float

    def final(self, variant="lambda2"):
        r = {"lambda2": self.residual, "lambda2_squared": self.residual_squared_coeff,
             "ito": self.residual_ito}[variant]
        return r[-1]

    @property
    def vanishing_variant(self):
        """Which dissipation coefficient balances the energy on these paths."""
        if abs(self.lambda2 - self.lambda2 ** 2) < 1e-12:
            return "indistinguishable"
        a = float(np.mean(np.abs(self.residual[-1])))
        b = float(np.mean(np.abs(self.residual_squared_coeff[-1])))
        return "lambda2" if a <= b else "lambda2_squared"


def energy_balance(traj, p):
    """Terms and residual of ``1/2|grad u(t)|^2 + lambda2 int |u x Lap u|^2 = ...``.

    In Stratonovich form the right-hand side is ``1/2|grad u(0)|^2 +
    lambda3 int <grad u, grad g(u)> o dW``; for ``lambda3 = 0`` the residual
    is pure time-quadrature error, O(dt^2) for the midpoint scheme.
    """
    _need_snapshots(traj, 2)
    system = _system(p)
    dom = system.domain
    prm = system.params
    U = traj.coeffs
    t = traj.times
    energy = 0.5 * dom.h1_seminorm_sq(U)
    X = system.cross_lap_sq(U)
    dissipation = _cumtrap(X, t)
    dW = recorded_increments(traj)
    gU = system.g(U)
    mu3 = dom.eigenvalues[..., None]
    axes = dom.spatial_axes(U.ndim)
    S = prm.lambda3 * np.sum(mu3 * U * gU, axis=axes)
    strat = _cum_strat(S, dW)
    base = energy - energy[:1]
    residual = base + prm.lambda2 * dissipation - strat
    residual_sq = base + prm.lambda2 ** 2 * dissipation - strat

    ito_sum = _cum_ito(S, dW)
    corr1 = 0.5 * prm.lambda3 ** 2 * dom.h1_seminorm_sq(gU)
    corr2 = 0.5 * prm.lambda3 ** 2 * np.sum(mu3 * U * system.g(gU), axis=axes)
    residual_ito = base + prm.lambda2 * dissipation - ito_sum - _cumtrap(corr1 + corr2, t)
    return BalanceReport(t, energy, dissipation, strat, residual, residual_sq, residual_ito,
                         prm.lambda2)


# a priori estimates ---------------------------------------------------------


@dataclass
class EstimateReport:
    """Per-path a priori statistics plus ensemble means and standard errors."""

    per_path: dict
    mean: dict = field(default_factory=dict)
    se: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.per_path.items():
            self.mean[k], self.se[k] = (float(x) for x in mean_se(v))


def apriori_statistics(traj, p):
    """Per-path values of the tracked norms; arrays of shape ``(paths,)``."""
    _need_snapshots(traj, max(1, traj.stride))
    system = _system(p)
    U = traj.coeffs
    t = traj.times
    l2 = traj.observables["l2"]
    damping = system.damping_lp(U, 6.0 / 5.0) ** (4.0 / 3.0)
    return {
        "l2_drift": np.max(np.abs(l2 - l2[:1]), axis=0) / l2[0],
        "sup_grad_sq": np.max(2.0 * traj.observables["energy"], axis=0),
        "int_cross_sq": np.trapezoid(system.cross_lap_sq(U), t, axis=0),
        "int_damping_l65": np.trapezoid(damping, t, axis=0),
    }


def apriori_report(traj, p):
    if traj.num_paths < 2:
        raise StatisticalPowerError("a priori report needs at least 2 paths")
    return EstimateReport(apriori_statistics(traj, p))


# sphere constraint ----------------------------------------------------------


def sphere_deviation_array(domain, coeffs):
    grid = domain.to_grid(coeffs)
    mag2 = np.sum(grid * grid, axis=-1)
    axes = tuple(range(mag2.ndim - domain.dim, mag2.ndim))
    return domain.cell_volume * np.sum((mag2 - 1.0) ** 2, axis=axes)


def sphere_deviation(u):
    """``int_D (|u(x)|^2 - 1)^2 dx`` by midpoint quadrature."""
    return float(sphere_deviation_array(u.domain, u.coeffs))


# weak form ------------------------------------------------------------------


def projected_test_function(domain, phi):
    """Coefficients of a test function on ``domain``'s modes.

    ``phi`` is a ``GridField`` sampled on any grid over the same geometry,
    typically much finer than the simulation grid.
    """
    if tuple(phi.domain.lengths) != tuple(domain.lengths):
        raise ConfigError("test function lives on a different geometry")
    return domain.with_grid(phi.domain.grid).to_coeffs(phi.values)


def resample(domain, values, grid):
    """Band-limited interpolation of grid ``values`` onto another midpoint grid."""
    full = Domain(domain.lengths, domain.grid, domain.grid)
    return full.with_grid(grid).to_grid(full.to_coeffs(values))


def weak_form_terms(traj, p, phi, quad_grid=None, flip_precession_sign=False):
    """Left side and right side of the weak formulation tested against ``phi``.

    The test function enters through its projection ``psi`` onto the
    retained modes; the gradient-form integrals are evaluated with spectral
    derivatives and midpoint quadrature on ``quad_grid`` (default ``4n``).
    Returns ``(lhs, rhs)`` of shape ``(K, paths)``.
    """
    _need_snapshots(traj, 2)
    system = _system(p)
    dom = system.domain
    prm = system.params
    psi = projected_test_function(dom, phi)
    Q = dom.with_grid(quad_grid if quad_grid is not None else tuple(4 * n for n in dom.modes))
    U = traj.coeffs
    Ug = Q.to_grid(U)
    dU = Q.gradient_grid(U)
    Psi = Q.to_grid(psi)
    dPsi = Q.gradient_grid(psi)
    H = resample(dom, prm.h.values, Q.grid)

    sign = 1.0 if flip_precession_sign else -1.0
    prec = sum(Q.grid_inner(du, cross3(dp, Ug)) for du, dp in zip(dU, dPsi))
    damp = sum(Q.grid_inner(du, cross3(cross3(du, Psi) + cross3(Ug, dp), Ug))
               for du, dp in zip(dU, dPsi))
    drift = prm.lambda1 * sign * prec - prm.lambda2 * damp
    S = Q.grid_inner(cross3(Ug, H), Psi)

    lhs = dom.coeff_inner(U - U[:1], psi)
    rhs = _cumtrap(drift, traj.times) + prm.lambda3 * _cum_strat(S, recorded_increments(traj))
    return lhs, rhs


def weak_form_residual(traj, p, phi, time_index=-1, **kw):
    """Absolute weak-form residual per path at ``times[time_index]``."""
    lhs, rhs = weak_form_terms(traj, p, phi, **kw)
    return np.abs(lhs[time_index] - rhs[time_index])


# fractional time regularity ----------------------------------------------


def _space_norm(domain, space):
    if space in ("L6/5", "L2"):
        q = 6.0 / 5.0 if space == "L6/5" else 2.0
        return lambda c: domain.grid_lp(domain.to_grid(c), q)
    if space == "Hm1":
        return lambda c: np.sqrt(domain.hminus1_sq(c))
    if space == "L2coeff":
        return lambda c: np.sqrt(domain.coeff_inner(c, c))
    raise ConfigError(f"unknown Besov space {space!r}")


def besov_norm(path, times, alpha, q, domain, space="L6/5"):
    """Discrete ``W^{alpha,q}(0,T;E)`` norm of a field path.

    ``path`` has shape ``(K, ..., *modes, 3)``; the result has the shape of
    the middle batch axes.  Both time integrals use trapezoid weights and the
    double integral drops pairs with ``|t - s|`` below the sampling step.
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if not 1 < q < math.inf:
        raise ConfigError(f"q must lie in (1, inf), got {q}")
    times = np.asarray(times, dtype=float)
    K = times.size
    if K < 2:
        raise InsufficientDataError("need at least two samples in time")
    nrm = _space_norm(domain, space)
    w = np.empty(K)
    w[1:-1] = 0.5 * (times[2:] - times[:-2])
    w[0] = 0.5 * (times[1] - times[0])
    w[-1] = 0.5 * (times[-1] - times[-2])
    band = np.min(np.diff(times)) * (1 - 1e-9)
    batch_nd = path.ndim - 1 - domain.dim - 1
    wb = w.reshape((K,) + (1,) * batch_nd)
    lebesgue = np.sum(wb * nrm(path) ** q, axis=0)
    expo = 1.0 + alpha * q
    semi = np.zeros_like(lebesgue)
    for i in range(K - 1):
        lag = times[i + 1:] - times[i]
        keep = lag >= band
        if not np.any(keep):
            continue
        d = nrm(path[i + 1:][keep] - path[i])
        wt = (w[i] * w[i + 1:][keep] / lag[keep] ** expo).reshape((-1,) + (1,) * batch_nd)
        semi = semi + 2.0 * np.sum(wt * d ** q, axis=0)
    return (lebesgue + semi) ** (1.0 / q)


# martingale -----------------------------------------------------------------


def default_probes(domain, count=5):
    """The first ``count`` directions ``e_k (x) unit vector``, modes in C order."""
    out = []
    for flat in range(int(np.prod(domain.modes))):
        k = np.unravel_index(flat, domain.modes)
        for comp in range(3):
            c = np.zeros(domain.coeff_shape)
            c[k + (comp,)] = 1.0
            out.append(c)
            if len(out) == count:
                return out
    return out


@dataclass
class MartingaleSample:
    """``<M_n(t), g>`` and the predicted quadratic variation for one probe ``g``."""

    times: np.ndarray
    projections: np.ndarray
    qv_predicted: np.ndarray
    qv_realized: np.ndarray

    def __post_init__(self):
        if np.any(self.projections[0] != 0):
            raise ConfigError("martingale projections must start at zero")


def martingale_samples(traj, p, probes):
    """Reconstruct ``<M_n(t), g>`` for every probe by removing the Ito drift."""
    _need_snapshots(traj, 2)
    system = _system(p)
    dom = system.domain
    U = traj.coeffs
    t = traj.times
    drift = system.drift_ito(U)
    gU = system.g(U)
    lam3 = system.params.lambda3
    out = []
    for g in probes:
        g = np.asarray(g, dtype=float)
        proj = dom.coeff_inner(U - U[:1], g) - _cumtrap(dom.coeff_inner(drift, g), t)
        proj[0] = 0.0
        pred = lam3 ** 2 * _cumtrap(dom.coeff_inner(gU, g) ** 2, t)
        real = np.concatenate([np.zeros_like(proj[:1]), np.cumsum(np.diff(proj, axis=0) ** 2, axis=0)])
        out.append(MartingaleSample(t, proj, pred, real))
    return out


def informative_probes(pred_totals):
    """Mask of probes with a predicted quadratic variation above roundoff."""
    tot = np.asarray(pred_totals, dtype=float)
    return tot > QV_NEGLIGIBLE * max(float(np.max(tot, initial=0.0)), 1e-300)


def ratio_of_means(x, y):
    """Ratio estimator ``sum x / sum y`` with delta-method standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = x.sum() / y.sum()
    n = x.size
    if n < 2:
        return float(r), float("nan")
    se = np.sqrt(np.sum((x - r * y) ** 2) / (n * (n - 1))) / abs(y.mean())
    return float(r), float(se)


@dataclass
class ProbeSummary:
    mean_final: float
    se_final: float
    mean_checkpoints: list
    se_checkpoints: list
    qv_ratio: float
    qv_ratio_se: float
    qv_ratio_ci: tuple
    qv_ratio_half_factor: float

    @property
    def zero_mean_z(self):
        return abs(self.mean_final) / self.se_final if self.se_final > 0 else 0.0


@dataclass
class MartingaleReport:
    num_paths: int
    checkpoints: list
    probes: list
    samples: list
    note: str = ("quadratic variation predicted with lambda3^2 (Ito isometry); "
                 "a prefactor of 1/2 lambda3^2 would give ratios near 2")


def martingale_diagnostics(traj, p, probes=None, checkpoints=5, min_paths=MIN_MARTINGALE_PATHS):
    """Zero-mean and quadratic-variation statistics of ``M_n`` over an ensemble."""
    if traj.num_paths < min_paths:
        raise StatisticalPowerError(
            f"martingale diagnostics need >= {min_paths} paths, got {traj.num_paths}")
    dom = traj.domain
    probes = default_probes(dom) if probes is None else probes
    samples = martingale_samples(traj, p, probes)
    K = len(traj.times)
    cp = sorted(set(np.linspace(0, K - 1, checkpoints + 1).round().astype(int)[1:].tolist()))
    summaries = []
    usable = informative_probes([np.sum(s.qv_predicted[-1]) for s in samples])
    for s, use in zip(samples, usable):
        m, se = mean_se(s.projections.T)
        real, pred = s.qv_realized[-1], s.qv_predicted[-1]
        if use:
            r, rse = ratio_of_means(real, pred)
        else:
            r, rse = float("nan"), float("nan")
        summaries.append(ProbeSummary(
            float(m[-1]), float(se[-1]), [float(m[i]) for i in cp], [float(se[i]) for i in cp],
            r, rse, (r - Z95 * rse, r + Z95 * rse), 2.0 * r,
        ))
    return MartingaleReport(traj.num_paths, [float(traj.times[i]) for i in cp], summaries, samples)


# Green-type identities ------------------------------------------------------


def green_identity_terms(u, v, quad_grid=None):
    """``int <u x Au, v>``, the two gradient forms, and the symmetric term.

    ``A = -Laplacian``.  Evaluated at ``quad_grid`` (default ``4n``) so the
    products are integrated exactly for band-limited inputs.
    """
    dom = u.domain
    Q = dom.with_grid(quad_grid if quad_grid is not None else tuple(4 * n for n in dom.modes))
    U = Q.to_grid(u.coeffs)
    V = Q.to_grid(v.coeffs)
    AU = Q.to_grid(-dom.laplacian_coeffs(u.coeffs))
    dU = Q.gradient_grid(u.coeffs)
    dV = Q.gradient_grid(v.coeffs)
    lhs = Q.grid_inner(cross3(U, AU), V)
    rhs1 = sum(Q.grid_inner(du, cross3(dv, U) + cross3(V, du)) for du, dv in zip(dU, dV))
    rhs2 = sum(Q.grid_inner(du, cross3(dv, U)) for du, dv in zip(dU, dV))
    sym = sum(Q.grid_inner(du, cross3(V, du)) for du in dU)
    return float(lhs), float(rhs1), float(rhs2), float(sym)


def green_identity_check(u, v, quad_grid=None):
    """Largest absolute discrepancy across both Green-type identities."""
    lhs, rhs1, rhs2, _ = green_identity_terms(u, v, quad_grid)
    return max(abs(lhs - rhs1), abs(lhs - rhs2))
