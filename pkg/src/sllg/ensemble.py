"""Monte Carlo orchestration: ensembles of Brownian paths and (n, dt) sweeps.

Paths are split into fixed-size chunks (``ensemble.chunk_size``) that are
simulated as one batch each.  Each chunk is computed the same way no matter
which worker picks it up. Aggregation runs in the parent process, in path
index order, with exactly rounded sums. So every output file is independent
of ``--workers``.

Path ``i`` of an ensemble with master seed ``s`` draws its increments from
``path_seed(s, i)`` (a SeedSequence spawn key), so its statistics do not
depend on what other paths are in the ensemble.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import diagnostics as dg
from .config import SimConfig
from .errors import ConfigError, EnsembleFailure
from .families import bump_values, default_bumps
from .llg import LLGSystem
from .sde import _num_steps, generate_path, integrate, path_seed
from .spectral import GridField

SERIES_COLUMNS = ("t", "l2", "h1", "energy", "sphere")
NUM_CHECKPOINTS = 5


# per-path statistics ------------------------------------------------------


def _besov_indices(K, samples):
    return np.unique(np.linspace(0, K - 1, min(samples, K)).round().astype(int))


def bump_test_functions(domain):
    """The three default bump test functions as fine-grid ``GridField`` objects."""
    fine = domain.with_grid(tuple(16 * n for n in domain.modes))
    return [GridField(fine, bump_values(fine, c, r, v)) for c, r, v in default_bumps(domain)]


def path_statistics(traj, params, diag, with_martingale=True, with_weak_form=True):
    """Scalar statistics of every path in ``traj`` (failed paths excluded by the caller).

    Returns ``(stats, mseries)``: ``stats`` maps names to arrays of shape
    ``(paths,)`` and ``mseries`` is the ``(K, paths, probes)`` array of
    martingale projections (``None`` when snapshots are not available).
    """
    system = LLGSystem(params)
    dom = traj.domain
    obs = traj.observables
    l2 = obs["l2"]
    mode0 = traj.final[(slice(None),) + (0,) * dom.dim] / math.sqrt(dom.volume)
    stats = {
        "l2_initial": l2[0],
        "l2_drift": np.max(np.abs(l2 - l2[:1]), axis=0) / l2[0],
        "l2_sup_sq": np.max(l2 * l2, axis=0),
        "sup_grad_sq": np.max(2.0 * obs["energy"], axis=0),
        "energy_initial": obs["energy"][0],
        "energy_final": obs["energy"][-1],
        "sphere_initial": obs["sphere"][0],
        "sphere_final": obs["sphere"][-1],
        "mean_u_x": mode0[:, 0],
        "mean_u_y": mode0[:, 1],
        "mean_u_z": mode0[:, 2],
    }
    mseries = None
    if traj.coeffs is None:
        return stats, mseries
    d = traj.final - traj.coeffs[0]
    stats["dist_sq_initial"] = dom.coeff_inner(d, d)
    U = traj.coeffs
    stats["int_cross_sq"] = np.trapezoid(system.cross_lap_sq(U), traj.times, axis=0)
    stats["int_damping_l65"] = np.trapezoid(system.damping_lp(U, 6.0 / 5.0) ** (4.0 / 3.0),
                                            traj.times, axis=0)
    idx = _besov_indices(len(traj.times), diag.besov_samples)
    for space, label in (("L6/5", "l65"), ("L2", "l2"), ("Hm1", "hm1")):
        stats[f"besov_{label}"] = dg.besov_norm(U[idx], traj.times[idx], diag.besov_alpha,
                                                diag.besov_q, dom, space)
    if traj.stride > 2:
        return stats, mseries
    bal = dg.energy_balance(traj, system)
    stats["balance_residual"] = bal.residual[-1]
    stats["balance_residual_squared_coeff"] = bal.residual_squared_coeff[-1]
    stats["balance_residual_ito"] = bal.residual_ito[-1]
    if with_weak_form:
        for j, phi in enumerate(bump_test_functions(dom)):
            stats[f"weak_residual_{j}"] = dg.weak_form_residual(traj, system, phi)
    if with_martingale:
        samples = dg.martingale_samples(traj, system, dg.default_probes(dom, diag.num_probes))
        K = len(traj.times)
        cps = _checkpoints(K)
        for j, s in enumerate(samples):
            stats[f"M_final_{j}"] = s.projections[-1]
            stats[f"qv_realized_{j}"] = s.qv_realized[-1]
            stats[f"qv_predicted_{j}"] = s.qv_predicted[-1]
            for c, i in enumerate(cps):
                stats[f"M_cp{c}_{j}"] = s.projections[i]
        mseries = np.stack([s.projections for s in samples], axis=-1)
    return stats, mseries


def _checkpoints(K):
    return sorted(set(np.linspace(0, K - 1, NUM_CHECKPOINTS + 1).round().astype(int)[1:].tolist()))


# chunk worker ---------------------------------------------------------------


@dataclass
class PathResult:
    index: int
    seed: int
    error: str | None
    stats: dict
    series: np.ndarray | None = None     # (K, columns) rows for paths/<i>.csv
    snapshots: dict | None = None        # step -> (grid values) for fields/<i>/
    final: np.ndarray | None = None


def _simulate_chunk(task):
    """Simulate one chunk of paths at every requested ``dt`` level.

    ``task`` is a plain tuple so it pickles cheaply:
    ``(config dict, path indices, n, dt levels, keep_series, keep_final)``.
    The coarsest level is generated from the path seed; finer levels are
    Brownian-bridge refinements of it.
    """
    cfg_dict, indices, n, dts, keep_series, keep_final = task
    cfg = SimConfig.from_dict(cfg_dict)
    dom = cfg.build_domain(n)
    params = cfg.build_params(dom)
    u0 = cfg.build_u0(dom)
    seeds = [path_seed(cfg.ensemble.master_seed, i) for i in indices]
    T = cfg.time.T
    coarse_dt = max(dts)
    base = [generate_path(T, coarse_dt, s) for s in seeds]
    out = {}
    for dt in sorted(dts, reverse=True):
        ratio = coarse_dt / dt
        levels = int(round(math.log2(ratio)))
        if abs(2 ** levels - ratio) > 1e-9 * ratio:
            raise ConfigError("dt levels must differ from the coarsest by powers of two", key="sweep.dt")
        paths = [b.refined(levels) for b in base]
        traj = integrate(u0, params, paths, cfg.scheme_config(), cfg.recording_policy(),
                         config_hash=cfg.config_hash, on_failure="record")
        out[dt] = _collect(cfg, traj, params, indices, seeds, keep_series, keep_final)
    return out


def _collect(cfg, traj, params, indices, seeds, keep_series, keep_final):
    ok = traj.ok_paths()
    results = []
    stats, mseries = {}, None
    if ok.size:
        # one path at a time keeps the grid-sized temporaries small
        parts = [path_statistics(traj.select([i]), params, cfg.diagnostics) for i in ok]
        stats = {k: np.concatenate([st[k] for st, _ in parts]) for k in parts[0][0]}
        if parts[0][1] is not None:
            mseries = np.concatenate([m for _, m in parts], axis=1)
    pos = {int(i): j for j, i in enumerate(ok)}
    snap_steps = None
    if keep_series and cfg.output.snapshots and traj.coeffs is not None:
        stride = cfg.output.snapshot_stride
        snap_steps = [(k, s) for k, s in enumerate(traj.steps) if s % stride == 0 or k == len(traj.steps) - 1]
    for b, (i, seed) in enumerate(zip(indices, seeds)):
        if b in traj.failures:
            results.append(PathResult(i, seed, traj.failures[b], {}))
            continue
        j = pos[b]
        pr = PathResult(i, seed, None, {k: float(v[j]) for k, v in stats.items()})
        if keep_series and cfg.output.path_series:
            cols = [traj.times] + [traj.observables[k][:, b] for k in SERIES_COLUMNS[1:]]
            if mseries is not None:
                cols += [mseries[:, j, p] for p in range(mseries.shape[-1])]
            pr.series = np.column_stack(cols)[:: cfg.output.series_stride]
        if snap_steps is not None:
            pr.snapshots = {int(s): traj.domain.to_grid(traj.coeffs[k, b]) for k, s in snap_steps}
        if keep_final:
            pr.final = traj.final[b]
        results.append(pr)
    return results


def _chunks(num_paths, chunk_size):
    return [list(range(a, min(a + chunk_size, num_paths))) for a in range(0, num_paths, chunk_size)]


def _map(tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [_simulate_chunk(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_chunk, tasks))


# aggregation ---------------------------------------------------------------


def aggregate(values):
    """Mean, standard error, min and max with exactly rounded sums.

    ``math.fsum`` makes the result independent of the order of ``values``.
    """
    x = [float(v) for v in values]
    n = len(x)
    if n == 0:
        return {"count": 0, "mean": None, "se": None, "min": None, "max": None}
    mean = math.fsum(x) / n
    se = math.sqrt(math.fsum((v - mean) ** 2 for v in x) / (n - 1) / n) if n > 1 else None
    return {"count": n, "mean": mean, "se": se, "min": min(x), "max": max(x)}


def _aggregate_all(paths):
    ok = [p for p in paths if p.error is None]
    names = sorted({k for p in ok for k in p.stats})
    return {k: aggregate([p.stats[k] for p in ok if k in p.stats]) for k in names}


def martingale_summary(paths, num_probes, min_paths=dg.MIN_MARTINGALE_PATHS):
    """Zero-mean and quadratic-variation statistics from per-path martingale values."""
    ok = [p for p in paths if p.error is None and "M_final_0" in p.stats]
    if len(ok) < min_paths:
        return None
    probes = []
    usable = dg.informative_probes([math.fsum(p.stats[f"qv_predicted_{j}"] for p in ok)
                                    for j in range(num_probes)])
    for j in range(num_probes):
        mfin = aggregate([p.stats[f"M_final_{j}"] for p in ok])
        real = np.array([p.stats[f"qv_realized_{j}"] for p in ok])
        pred = np.array([p.stats[f"qv_predicted_{j}"] for p in ok])
        if usable[j]:
            r, rse = dg.ratio_of_means(real, pred)
            ci = [r - dg.Z95 * rse, r + dg.Z95 * rse]
        else:
            r, rse, ci = None, None, None
        probes.append({
            "probe": j,
            "mean_final": mfin["mean"], "se_final": mfin["se"],
            "z_final": abs(mfin["mean"]) / mfin["se"] if mfin["se"] else 0.0,
            "checkpoints": [aggregate([p.stats[f"M_cp{c}_{j}"] for p in ok])
                            for c in range(NUM_CHECKPOINTS) if f"M_cp{c}_{j}" in ok[0].stats],
            "qv_ratio": r, "qv_ratio_se": rse, "qv_ratio_ci95": ci,
            "qv_ratio_half_factor": None if r is None else 2.0 * r,
        })
    return {"num_paths": len(ok), "probes": probes, "note": dg.MartingaleReport.note}


# results -------------------------------------------------------------------


@dataclass
class EnsembleResult:
    config: SimConfig
    paths: list
    aggregates: dict
    martingale: dict | None
    wall_time: float = field(default=0.0, compare=False)

    @property
    def failures(self):
        return [p for p in self.paths if p.error is not None]

    @property
    def complete(self):
        return not self.failures

    def mean(self, name):
        return self.aggregates[name]["mean"]

    def se(self, name):
        return self.aggregates[name]["se"]

    def values(self, name):
        return np.array([p.stats[name] for p in self.paths if p.error is None])

    def report(self):
        """JSON-ready report; deliberately free of wall-clock content."""
        cfg = self.config
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "code_version": __version__,
            "config_hash": cfg.config_hash,
            "num_paths": len(self.paths),
            "num_failed": len(self.failures),
            "complete": self.complete,
            "failures": [{"path": p.index, "seed": p.seed, "error": p.error} for p in self.failures],
            "aggregates": self.aggregates,
            "martingale": self.martingale,
            "energy_balance_variant": _balance_variant(self),
            "per_path": [{"path": p.index, "seed": p.seed, "ok": p.error is None, "stats": p.stats}
                         for p in self.paths],
        }


REPORT_SCHEMA_VERSION = "1.0"


def _balance_variant(res):
    if "balance_residual" not in res.aggregates or res.config.physics.lambda2 == 1.0:
        return None
    a = float(np.mean(np.abs(res.values("balance_residual"))))
    b = float(np.mean(np.abs(res.values("balance_residual_squared_coeff"))))
    return {"lambda2": a, "lambda2_squared": b, "vanishing": "lambda2" if a <= b else "lambda2_squared"}


def _finish(cfg, paths, t0):
    paths = sorted(paths, key=lambda p: p.index)
    if all(p.error is not None for p in paths):
        raise EnsembleFailure(f"all {len(paths)} paths failed; first error: {paths[0].error}")
    return EnsembleResult(cfg, paths, _aggregate_all(paths),
                          martingale_summary(paths, cfg.diagnostics.num_probes),
                          time.perf_counter() - t0)


def run(cfg, workers=1, keep_series=True):
    """Simulate ``cfg.ensemble.num_paths`` paths and aggregate their statistics."""
    t0 = time.perf_counter()
    _num_steps(cfg.time.T, cfg.time.dt)
    data = cfg.to_dict()
    tasks = [(data, chunk, None, (cfg.time.dt,), keep_series, False)
             for chunk in _chunks(cfg.ensemble.num_paths, cfg.ensemble.chunk_size)]
    paths = [p for res in _map(tasks, workers) for p in res[cfg.time.dt]]
    return _finish(cfg, paths, t0)


# convergence studies -------------------------------------------------------


def fit_order(dts, errors):
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    x, y = np.log(np.asarray(dts, dtype=float)), np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def monotone_within(means, ses, direction=-1, sigmas=2.0, rel_floor=1e-12):
    """True if no step moves against ``direction`` by more than ``sigmas`` combined SE.

    ``rel_floor`` adds a roundoff allowance of ``rel_floor * max(|a|, |b|)``,
    which matters only for statistics that barely vary across paths (such
    as the conserved L2 norm) and so have a standard error near zero.
    """
    for a, b, sa, sb in zip(means, means[1:], ses, ses[1:]):
        tol = sigmas * math.hypot(sa or 0.0, sb or 0.0) + rel_floor * max(abs(a), abs(b))
        if direction < 0 and b - a > tol:
            return False
        if direction > 0 and a - b > tol:
            return False
    return True


@dataclass
class ConvergenceReport:
    config: SimConfig
    results: dict                  # (n, dt) -> EnsembleResult
    strong: dict                   # n -> {"dt", "error_mean", "error_se", "order", "reference_dt"}
    wall_time: float = 0.0

    @property
    def ns(self):
        return sorted({k[0] for k in self.results})

    @property
    def dts(self):
        return sorted({k[1] for k in self.results})

    def column(self, name, dt=None):
        """Means and SEs of a statistic across ``n`` at a fixed ``dt`` (default finest)."""
        dt = min(self.dts) if dt is None else dt
        rs = [self.results[(n, dt)] for n in self.ns]
        return [r.mean(name) for r in rs], [r.se(name) for r in rs]

    def sphere_trend(self, dt=None, stat="sphere_final"):
        m, s = self.column(stat, dt)
        return {"n": self.ns, "mean": m, "se": s, "decreasing_2sigma": monotone_within(m, s, -1)}

    def apriori_table(self, dt=None):
        names = ("l2_drift", "sup_grad_sq", "int_cross_sq", "int_damping_l65", "besov_l65")
        return {k: dict(zip(("mean", "se"), self.column(k, dt))) for k in names
                if k in self.results[(self.ns[0], min(self.dts) if dt is None else dt)].aggregates}

    def table_rows(self):
        rows = []
        for (n, dt), r in sorted(self.results.items()):
            row = {"n": n, "dt": dt, "num_failed": len(r.failures)}
            for k, a in r.aggregates.items():
                row[f"{k}_mean"] = a["mean"]
                row[f"{k}_se"] = a["se"]
            st = self.strong.get(n)
            if st is not None:
                i = st["dt"].index(dt)
                row["strong_error_mean"] = st["error_mean"][i]
                row["strong_error_se"] = st["error_se"][i]
            rows.append(row)
        return rows

    def report(self):
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "code_version": __version__,
            "config_hash": self.config.config_hash,
            "n": self.ns,
            "dt": self.dts,
            "strong": {str(n): v for n, v in self.strong.items()},
            "sphere_trend": self.sphere_trend(),
            "apriori": self.apriori_table(),
            "points": [{"n": n, "dt": dt, "report": r.report()}
                       for (n, dt), r in sorted(self.results.items())],
        }


def convergence_study(cfg, workers=1):
    """Coupled ensembles over every ``(n, dt)`` of ``cfg.sweep``.

    All levels share the Brownian paths of the master seed: finer ``dt`` are
    bridge refinements of the coarsest, and every ``n`` sees the same paths.
    With two or more ``dt`` levels each ``n`` also gets a strong
    self-convergence fit against a reference ``reference_refinements`` halvings
    below the finest level.
    """
    t0 = time.perf_counter()
    sw = cfg.sweep
    ns = list(sw.n) or [None]
    dts = list(sw.dt) or [cfg.time.dt]
    for dt in dts:
        _num_steps(cfg.time.T, dt)
    multi = len(dts) > 1
    ref_dt = min(dts) / 2 ** sw.reference_refinements if multi else None
    levels = tuple(dts) + ((ref_dt,) if multi else ())
    data = cfg.to_dict()
    chunks = _chunks(cfg.ensemble.num_paths, cfg.ensemble.chunk_size)
    tasks = [(data, c, n, levels, False, multi) for n in ns for c in chunks]
    outs = _map(tasks, workers)
    results, strong = {}, {}
    for a, n in enumerate(ns):
        per = outs[a * len(chunks):(a + 1) * len(chunks)]
        by_dt = {dt: [p for o in per for p in o[dt]] for dt in levels}
        n_key = n if n is not None else cfg.domain.n[0]
        for dt in dts:
            results[(n_key, dt)] = _finish(cfg, by_dt[dt], t0)
        if multi:
            ref = {p.index: p for p in by_dt[ref_dt]}
            err_mean, err_se = [], []
            dom = cfg.build_domain(n)
            for dt in dts:
                errs = []
                for p in by_dt[dt]:
                    r = ref[p.index]
                    if p.error is None and r.error is None:
                        d = p.final - r.final
                        errs.append(math.sqrt(float(dom.coeff_inner(d, d))))
                agg = aggregate(errs)
                err_mean.append(agg["mean"])
                err_se.append(agg["se"])
            strong[n_key] = {"dt": list(dts), "error_mean": err_mean, "error_se": err_se,
                             "order": fit_order(dts, err_mean), "reference_dt": ref_dt}
    return ConvergenceReport(cfg, results, strong, time.perf_counter() - t0)


def sweep_config(cfg, n=None, dt=None):
    """Config describing a single sweep point, e.g. for comparing with ``run``."""
    data = cfg.to_dict()
    if n is not None:
        data["domain"]["n"] = [n] * cfg.domain.dim
    if dt is not None:
        data["time"]["dt"] = dt
    data["sweep"] = {"n": [], "dt": [], "reference_refinements": cfg.sweep.reference_refinements}
    return SimConfig.from_dict(data)


__all__ = ["EnsembleResult", "ConvergenceReport", "run", "convergence_study", "aggregate",
           "fit_order", "monotone_within", "path_statistics", "sweep_config"]
