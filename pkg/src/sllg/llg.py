"""Galerkin drift and diffusion operators of the stochastic LLG equation.

Nonlinear terms are evaluated pseudo-spectrally: synthesise ``u`` and
``Delta u`` on the grid, form the cross products pointwise, and analyse the
result back onto the retained modes.  Because analysis is the adjoint of
synthesis, ``<pi_n(u x w), u> = <u x w, u>_N = 0`` holds to roundoff for any
grid size, so every operator here is exactly skew to ``u``.

``g`` is the bare map ``u -> pi_n(u x h)``; the noise amplitude ``lambda3``
is applied by the integrators and diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .spectral import Domain, GridField, SpectralField, cross3


@dataclass(frozen=True, eq=False)
class PhysParams:
    lambda1: float
    lambda2: float
    lambda3: float
    h: GridField
    allow_degenerate: bool = field(default=False, repr=False)  # test hook: permits lambda2 <= 0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite", key=f"physics.{name}")
            object.__setattr__(self, name, v)
        if self.lambda2 <= 0 and not self.allow_degenerate:
            raise ConfigError("lambda2 must be positive", key="physics.lambda2")
        if not isinstance(self.h, GridField):
            raise ConfigError("h must be a GridField", key="physics.h")

    @property
    def domain(self):
        return self.h.domain

    def replace(self, **kw):
        vals = dict(lambda1=self.lambda1, lambda2=self.lambda2, lambda3=self.lambda3,
                    h=self.h, allow_degenerate=self.allow_degenerate)
        vals.update(kw)
        return PhysParams(**vals)


@dataclass(frozen=True, eq=False)
class GalerkinState:
    u: SpectralField
    time: float = 0.0

    def __post_init__(self):
        if not (self.time >= 0 and math.isfinite(self.time)):
            raise ConfigError("time must be finite and nonnegative")


class LLGSystem:
    """Array-level operators for one (domain, parameters) pair.

    Every method takes coefficient arrays of shape ``(..., *modes, 3)`` so
    that a whole batch of Brownian paths advances in one call.
    """

    def __init__(self, params):
        self.params = params
        self.domain: Domain = params.domain
        self.hgrid = params.h.values

    # building blocks
    def _grids(self, u):
        dom = self.domain
        return dom.to_grid(u), dom.to_grid(dom.laplacian_coeffs(u))

    def f1(self, u):
        U, D = self._grids(u)
        return self.domain.to_coeffs(cross3(U, D))

    def f2(self, u):
        U, D = self._grids(u)
        return self.domain.to_coeffs(cross3(U, cross3(U, D)))

    def g(self, u):
        return self.domain.to_coeffs(cross3(self.domain.to_grid(u), self.hgrid))

    def g2(self, u):
        """``pi_n[(pi_n(u x h)) x h]``; the inner projection comes first."""
        return self.g(self.g(u))

    def ito_correction(self, u):
        return 0.5 * self.params.lambda3 ** 2 * self.g2(u)

    def drift_stratonovich(self, u):
        p = self.params
        U, D = self._grids(u)
        C1 = cross3(U, D)
        return self.domain.to_coeffs(p.lambda1 * C1 - p.lambda2 * cross3(U, C1))

    def drift_ito(self, u):
        return self.drift_stratonovich(u) + self.ito_correction(u)

    def increment(self, u, dt, dW):
        """``a(u) dt + lambda3 g(u) dW`` with one grid round trip.

        ``dW`` is a scalar or an array matching the leading batch axes of ``u``.
        """
        p = self.params
        U, D = self._grids(u)
        C1 = cross3(U, D)
        dW = np.asarray(dW, dtype=float)
        dW = dW.reshape(dW.shape + (1,) * (self.domain.dim + 1))
        G = dt * (p.lambda1 * C1 - p.lambda2 * cross3(U, C1)) + (p.lambda3 * dW) * cross3(U, self.hgrid)
        return self.domain.to_coeffs(G)

    # scalar observables, batched over leading axes
    def cross_lap_sq(self, u):
        """``|u x Delta u|^2`` by grid quadrature."""
        U, D = self._grids(u)
        C = cross3(U, D)
        return self.domain.grid_inner(C, C)

    def damping_lp(self, u, p=6.0 / 5.0):
        """``|u x (u x Delta u)|_{L^p}`` by grid quadrature."""
        U, D = self._grids(u)
        return self.domain.grid_lp(cross3(U, cross3(U, D)), p)


def _wrap(name):
    def op(u, p=None):
        system = LLGSystem(p) if p is not None else _bare_system(u.domain)
        return SpectralField(u.domain, getattr(system, name)(u.coeffs))
    return op


def _bare_system(domain):
    h = GridField(domain, np.zeros(domain.grid_shape))
    return LLGSystem(PhysParams(1.0, 1.0, 0.0, h))


def f1(u):
    """``pi_n(u x Delta u)``."""
    return _wrap("f1")(u)


def f2(u):
    """``pi_n(u x (u x Delta u))``."""
    return _wrap("f2")(u)


def g(u, p):
    """``pi_n(u x h)``."""
    return _wrap("g")(u, p)


def ito_correction(u, p):
    """``(lambda3^2 / 2) pi_n[(pi_n(u x h)) x h]``."""
    return _wrap("ito_correction")(u, p)


def drift_stratonovich(u, p):
    """``lambda1 f1(u) - lambda2 f2(u)``."""
    return _wrap("drift_stratonovich")(u, p)


def drift_ito(u, p):
    return _wrap("drift_ito")(u, p)
