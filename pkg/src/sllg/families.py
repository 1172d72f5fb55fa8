"""Initial data, noise shape fields and test functions shipped with the simulator."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .spectral import GridField, SpectralField

# Oversampling used when projecting non-band-limited functions onto the modes;
# the quadrature error it leaves is far below every tolerance in the suite.
PROJECTION_OVERSAMPLE = 16


def _as_vector(v, key):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ConfigError(f"expected a finite 3-vector, got {v.tolist()}", key=key)
    return v


def constant_values(domain, vector):
    vec = _as_vector(vector, "vector")
    return np.broadcast_to(vec, domain.grid_shape).copy()


def winding_values(domain, winding=1.0):
    """``(sin theta, 0, cos theta)`` with ``theta = winding * pi * x / L`` along axis 0."""
    x = domain.mesh()[0]
    theta = float(winding) * np.pi * x / domain.lengths[0]
    return np.stack([np.sin(theta), np.zeros_like(theta), np.cos(theta)], axis=-1)


def cosine_h_values(domain, amplitude=1.0):
    """``(0, 0, a cos(pi x / L))`` along axis 0."""
    x = domain.mesh()[0]
    out = np.zeros(domain.grid_shape)
    out[..., 2] = float(amplitude) * np.cos(np.pi * x / domain.lengths[0])
    return out


def _normalize(values):
    mag = np.linalg.norm(values, axis=-1, keepdims=True)
    if np.any(mag == 0):
        raise ConfigError("initial field vanishes somewhere; cannot normalise to the sphere",
                          key="initial.vector")
    return values / mag


def project(domain, values_fn, oversample=PROJECTION_OVERSAMPLE):
    """``pi_n`` of a function given by ``values_fn(fine_domain) -> grid values``.

    The inner products are computed on an oversampled grid so the result is
    the continuum projection up to quadrature error.
    """
    fine = domain.with_grid(tuple(max(oversample * n, N) for n, N in zip(domain.modes, domain.grid)))
    return SpectralField(domain, fine.to_coeffs(values_fn(fine)))


def initial_datum(domain, family="winding", vector=(1.0, 0.0, 0.0), winding=1.0):
    """``pi_n u0`` for a pointwise unit-length ``u0``."""
    if family == "constant":
        return project(domain, lambda d: _normalize(constant_values(d, vector)))
    if family == "winding":
        return project(domain, lambda d: _normalize(winding_values(d, winding)))
    raise ConfigError(f"unknown initial family {family!r}", key="initial.family")


def noise_field(domain, family="constant", vector=(0.0, 0.0, 1.0), amplitude=1.0):
    if family == "constant":
        return GridField(domain, constant_values(domain, _as_vector(vector, "physics.h_vector")))
    if family == "cosine":
        return GridField(domain, cosine_h_values(domain, amplitude))
    raise ConfigError(f"unknown h family {family!r}", key="physics.h_family")


def _bump1d(s):
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def bump_values(domain, center, radius, direction):
    """Smooth bump supported in the open box ``|x_i - c_i| < r_i``, times a fixed direction."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    radius = np.atleast_1d(np.asarray(radius, dtype=float))
    if center.size == 1:
        center = np.repeat(center, domain.dim)
    if radius.size == 1:
        radius = np.repeat(radius, domain.dim)
    for c, r, L in zip(center, radius, domain.lengths):
        if r <= 0 or c - r <= 0 or c + r >= L:
            raise ConfigError("bump support must lie inside the domain interior")
    prof = np.ones(domain.grid)
    for x, c, r in zip(domain.mesh(), center, radius):
        prof = prof * _bump1d((x - c) / r)
    return prof[..., None] * _as_vector(direction, "direction")


def default_bumps(domain):
    """Three fixed test functions with distinct supports and directions."""
    L = domain.lengths[0]
    specs = [
        (0.35 * L, 0.25 * L, (1.0, 0.0, 0.0)),
        (0.45 * L, 0.3 * L, (0.0, 1.0, 0.0)),
        (0.6 * L, 0.2 * L, (0.0, 0.6, 0.8)),
    ]
    out = []
    for c, r, v in specs:
        center = [c] + [0.5 * Lj for Lj in domain.lengths[1:]]
        radius = [r] + [0.3 * Lj for Lj in domain.lengths[1:]]
        out.append((center, radius, v))
    return out
