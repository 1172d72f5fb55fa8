"""Brownian paths and Stratonovich time stepping of the Galerkin system.

Two schemes are provided, both consistent with the Stratonovich
interpretation for one-dimensional noise:

* ``heun``: explicit predictor-corrector, strong order 1 for scalar noise;
* ``midpoint``: implicit midpoint solved by fixed-point iteration.  The
  increment is evaluated at ``m = (u + u') / 2`` and every operator is skew to
  its argument, so ``|u'|^2 - |u|^2 = 2 <m, u' - u> = 0`` up to the iteration
  tolerance.

The integrator advances a batch of paths at once; each path's arithmetic is
independent of the rest of the batch (per-slice matmuls, per-path
convergence tests), so results do not depend on how paths are grouped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, ConfigError, StepFailureError
from .llg import GalerkinState, LLGSystem, PhysParams
from .spectral import SpectralField

SCHEMES = ("heun", "midpoint")


def path_seed(master_seed, index):
    """64-bit seed of path ``index``: SeedSequence(master_seed, spawn_key=(index,))."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed, level):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(level),)))


def _num_steps(T, dt):
    if not (T > 0 and dt > 0):
        raise ConfigError("T and dt must be positive", key="time.dt")
    r = T / dt
    k = int(round(r))
    if k < 1 or abs(r - k) > 1e-12 * max(1.0, r):
        raise ConfigError(f"dt={dt} does not divide T={T}", key="time.dt")
    return k


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Increments of a scalar Wiener process on a uniform grid.

    ``level`` counts Brownian-bridge refinements from the generated path;
    level ``l`` draws its bridge samples from an RNG keyed by ``(seed, l)``.
    """

    dt: float
    increments: np.ndarray
    seed: int
    level: int = 0

    @property
    def num_steps(self):
        return len(self.increments)

    @property
    def T(self):
        return self.dt * self.num_steps

    def times(self):
        return self.dt * np.arange(self.num_steps + 1)

    def values(self):
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    def refine(self):
        """Halve ``dt`` by sampling the bridge midpoint of every interval."""
        z = _rng(self.seed, self.level + 1).standard_normal(self.num_steps)
        first = 0.5 * self.increments + 0.5 * math.sqrt(self.dt) * z
        fine = np.empty(2 * self.num_steps)
        fine[0::2] = first
        fine[1::2] = self.increments - first
        return BrownianPath(self.dt / 2, fine, self.seed, self.level + 1)

    def refined(self, times):
        path = self
        for _ in range(times):
            path = path.refine()
        return path

    def coarsen(self, factor):
        if self.num_steps % factor:
            raise ConfigError("coarsening factor must divide the number of steps")
        return BrownianPath(self.dt * factor, self.increments.reshape(-1, factor).sum(axis=1),
                            self.seed, self.level)


def generate_path(T, dt, seed):
    n = _num_steps(T, dt)
    inc = math.sqrt(dt) * _rng(seed, 0).standard_normal(n)
    return BrownianPath(float(dt), inc, int(seed), 0)


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "midpoint"
    midpoint_tol: float = 1e-12
    midpoint_max_iter: int = 50

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}", key="scheme.name")
        if not self.midpoint_tol > 0:
            raise ConfigError("midpoint_tol must be positive", key="scheme.midpoint_tol")
        if int(self.midpoint_max_iter) < 1:
            raise ConfigError("midpoint_max_iter must be >= 1", key="scheme.midpoint_max_iter")


@dataclass(frozen=True)
class RecordingPolicy:
    """``every`` step, every ``stride``-th step, or ``observables`` only (no snapshots)."""

    mode: str = "every"
    stride: int = 1

    def __post_init__(self):
        if self.mode not in ("every", "stride", "observables"):
            raise ConfigError(f"unknown recording policy {self.mode!r}", key="recording.policy")
        if int(self.stride) < 1:
            raise ConfigError("stride must be >= 1", key="recording.stride")

    @property
    def step_stride(self):
        return 1 if self.mode == "every" else int(self.stride)


@dataclass(eq=False)
class Trajectory:
    """Recorded evolution of a batch of paths (axis 1 of ``coeffs`` indexes paths).

    ``coeffs`` holds snapshots at ``steps`` (``None`` for observables-only
    recording); ``observables`` maps names to arrays of shape ``(K, paths)``.
    Failed paths are listed in ``failures`` and carry NaN after the failure.
    """

    domain: object
    dt: float
    steps: np.ndarray
    times: np.ndarray
    coeffs: np.ndarray | None
    final: np.ndarray
    dW: np.ndarray
    seeds: tuple
    scheme: str
    observables: dict
    failures: dict = field(default_factory=dict)
    config_hash: str = ""

    @property
    def num_paths(self):
        return self.final.shape[0]

    @property
    def stride(self):
        return int(self.steps[1] - self.steps[0]) if len(self.steps) > 1 else 1

    def ok_paths(self):
        return np.array([i for i in range(self.num_paths) if i not in self.failures], dtype=int)

    def select(self, idx):
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        fail = {int(j): self.failures[int(i)] for j, i in enumerate(idx) if int(i) in self.failures}
        return Trajectory(
            self.domain, self.dt, self.steps, self.times,
            None if self.coeffs is None else self.coeffs[:, idx],
            self.final[idx], self.dW[:, idx], tuple(self.seeds[i] for i in idx), self.scheme,
            {k: v[:, idx] for k, v in self.observables.items()}, fail, self.config_hash,
        )


def _path_norm(x):
    return np.sqrt(np.sum(x * x, axis=tuple(range(1, x.ndim))))


def _heun_batch(system, u, dt, dW):
    p = system.params
    a0 = system.drift_stratonovich(u)
    g0 = system.g(u)
    dWb = dW.reshape(dW.shape + (1,) * (u.ndim - 1))
    pred = u + a0 * dt + (p.lambda3 * dWb) * g0
    a1 = system.drift_stratonovich(pred)
    g1 = system.g(pred)
    return u + 0.5 * (a0 + a1) * dt + (0.5 * p.lambda3 * dWb) * (g0 + g1)


def _midpoint_batch(system, u, dt, dW, tol, max_iter):
    """Returns ``(u_new, unconverged_idx, nonfinite_idx)``."""
    B = u.shape[0]
    x = u.copy()
    active = np.arange(B)
    nonfinite = []
    restart = max(1, max_iter // 2)
    for it in range(max_iter):
        if active.size == 0:
            break
        full = active.size == B
        ua = u if full else u[active]
        dWa = dW if full else dW[active]
        if it == restart:
            x[active] = _heun_batch(system, ua, dt, dWa)
        xa = x if full else x[active]
        new = ua + system.increment(0.5 * (ua + xa), dt, dWa)
        change = _path_norm(new - xa)
        scale = _path_norm(new)
        x[active] = new
        finite = np.isfinite(change) & np.isfinite(scale)
        if not np.all(finite):
            nonfinite.extend(active[~finite].tolist())
        done = change <= tol * scale
        active = active[finite & ~done]
    return x, active, np.array(sorted(nonfinite), dtype=int)


def _as_system(p):
    return p if isinstance(p, LLGSystem) else LLGSystem(p)


def step_heun(state, p, dt, dW, step=0):
    """One stochastic Heun step of ``du = a(u) dt + lambda3 g(u) o dW``."""
    system = _as_system(p)
    u = state.u.coeffs[None]
    new = _heun_batch(system, u, dt, np.array([float(dW)]))
    if not np.all(np.isfinite(new)):
        raise BlowUpError(step, state.time + dt, [0])
    return GalerkinState(SpectralField(state.u.domain, new[0]), state.time + dt)


def step_midpoint(state, p, dt, dW, cfg=SchemeConfig(), step=0):
    """One implicit midpoint step, ``u' = u + a(m) dt + lambda3 g(m) dW``, ``m = (u + u')/2``."""
    system = _as_system(p)
    u = state.u.coeffs[None]
    new, bad, nonfinite = _midpoint_batch(system, u, dt, np.array([float(dW)]),
                                          cfg.midpoint_tol, int(cfg.midpoint_max_iter))
    if nonfinite.size:
        raise BlowUpError(step, state.time + dt, [0])
    if bad.size:
        raise StepFailureError(step, state.time + dt, [0], int(cfg.midpoint_max_iter))
    return GalerkinState(SpectralField(state.u.domain, new[0]), state.time + dt)


def observe(system, u):
    """Scalar observables recorded along trajectories, batched over leading axes."""
    dom = system.domain
    grid = dom.to_grid(u)
    h1sq = dom.h1_seminorm_sq(u)
    mag2 = np.sum(grid * grid, axis=-1)
    axes = tuple(range(mag2.ndim - dom.dim, mag2.ndim))
    return {
        "l2": np.sqrt(dom.coeff_inner(u, u)),
        "h1": np.sqrt(h1sq),
        "energy": 0.5 * h1sq,
        "sphere": dom.cell_volume * np.sum((mag2 - 1.0) ** 2, axis=axes),
    }


def integrate(u0, p, paths, cfg=SchemeConfig(), record=RecordingPolicy(), *,
              config_hash="", on_failure="raise"):
    """Advance ``u0`` along every Brownian path in ``paths``.

    ``on_failure="raise"`` propagates the first step error; ``"record"``
    freezes failed paths (NaN state), lists them in ``Trajectory.failures``
    and keeps integrating the others.
    """
    system = _as_system(p)
    dom = system.domain
    if isinstance(paths, BrownianPath):
        paths = [paths]
    paths = list(paths)
    if not paths:
        raise ConfigError("need at least one Brownian path")
    dt = paths[0].dt
    nsteps = paths[0].num_steps
    if any(q.num_steps != nsteps or q.dt != dt for q in paths):
        raise ConfigError("all paths in a batch must share dt and length")
    dW = np.stack([q.increments for q in paths], axis=1)
    B = len(paths)

    base = u0.coeffs if isinstance(u0, SpectralField) else np.asarray(u0, dtype=float)
    if base.shape == dom.coeff_shape:
        u = np.broadcast_to(base, (B,) + dom.coeff_shape).copy()
    elif base.shape == (B,) + dom.coeff_shape:
        u = base.copy()
    else:
        raise ConfigError(f"initial coefficients shape {base.shape} incompatible with domain")

    stride = record.step_stride
    rec_steps = list(range(0, nsteps + 1, stride))
    if rec_steps[-1] != nsteps:
        rec_steps.append(nsteps)
    snapshots = [] if record.mode != "observables" else None
    obs = {k: [] for k in ("l2", "h1", "energy", "sphere")}
    failures = {}
    alive = np.ones(B, dtype=bool)

    def _record(state):
        if snapshots is not None:
            snapshots.append(state.copy())
        for k, v in observe(system, state).items():
            obs[k].append(v)

    def _fail(idx, err_cls, k, *extra):
        exc = err_cls(k, (k + 1) * dt, [int(i) for i in idx], *extra)
        if on_failure == "raise":
            raise exc
        for i in idx:
            failures[int(i)] = str(err_cls(k, (k + 1) * dt, [int(i)], *extra))
        alive[idx] = False
        u[idx] = np.nan

    _record(u)
    next_rec = 1
    for k in range(nsteps):
        live = np.flatnonzero(alive)
        if live.size:
            full = live.size == B
            ua = u if full else u[live]
            dWk = dW[k] if full else dW[k, live]
            if cfg.scheme == "heun":
                new = _heun_batch(system, ua, dt, dWk)
                bad = np.flatnonzero(~np.all(np.isfinite(new.reshape(len(live), -1)), axis=1))
                u[live] = new
                if bad.size:
                    _fail(live[bad], BlowUpError, k)
            else:
                new, unconv, nonfin = _midpoint_batch(system, ua, dt, dWk, cfg.midpoint_tol,
                                                      int(cfg.midpoint_max_iter))
                u[live] = new
                if nonfin.size:
                    _fail(live[nonfin], BlowUpError, k)
                unconv = np.setdiff1d(unconv, nonfin)
                if unconv.size:
                    _fail(live[unconv], StepFailureError, k, int(cfg.midpoint_max_iter))
        if next_rec < len(rec_steps) and rec_steps[next_rec] == k + 1:
            _record(u)
            next_rec += 1

    steps = np.array(rec_steps)
    return Trajectory(
        domain=dom, dt=dt, steps=steps, times=dt * steps,
        coeffs=None if snapshots is None else np.stack(snapshots),
        final=u.copy(), dW=dW, seeds=tuple(q.seed for q in paths), scheme=cfg.scheme,
        observables={k: np.stack(v) for k, v in obs.items()}, failures=failures,
        config_hash=config_hash,
    )
