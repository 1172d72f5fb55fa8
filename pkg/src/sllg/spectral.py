"""Cosine spectral discretisation of R^3-valued fields on intervals and rectangles.

The basis consists of the L^2-orthonormal eigenfunctions of the Neumann
Laplacian, tensorised across axes.  Fields live either as spectral
coefficients (``SpectralField``) or as samples on the cell-centred midpoint
grid ``x_j = (j + 1/2) L / N`` (``GridField``).  With uniform weights
``L/N`` the analysis map is the exact adjoint of synthesis, which is what
makes the pseudo-spectral nonlinear terms orthogonal to ``u`` at the
discrete level.

All array-level helpers accept arbitrary leading batch axes: a coefficient
array has shape ``(..., *modes, 3)`` and a grid array ``(..., *grid, 3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError

SUPPORTED_P = (1.0, 6.0 / 5.0, 1.5, 2.0, 6.0, math.inf)


def _axis_matrices(n, N, L, scale):
    x = (np.arange(N) + 0.5) * (L / N)
    k = np.arange(n)
    arg = np.pi * np.outer(x, k) / L
    phi = np.sqrt(2.0 / L) * np.cos(arg)
    phi[:, 0] = 1.0 / np.sqrt(L)
    dphi = -np.sqrt(2.0 / L) * (np.pi * k / L) * np.sin(arg)
    return x, scale * phi, scale * dphi


@dataclass(frozen=True)
class Domain:
    """Interval ``[0, L]`` or rectangle ``[0, L1] x [0, L2]`` with its discretisation.

    ``modes[i]`` is the number of retained cosine modes along axis ``i`` and
    ``grid[i]`` the number of collocation nodes (default ``2 * modes[i]``).
    ``normalization`` rescales the basis; it exists only so negative-control
    checks can corrupt the transform pair and must stay 1.0 otherwise.
    """

    lengths: tuple
    modes: tuple
    grid: tuple | None = None
    normalization: float = 1.0

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        modes = tuple(int(v) for v in np.atleast_1d(self.modes))
        if len(lengths) not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {len(lengths)}", key="domain.dim")
        if len(modes) == 1 and len(lengths) == 2:
            modes = modes * 2
        if len(modes) != len(lengths):
            raise ConfigError("modes must have one entry per axis", key="domain.n")
        grid = self.grid
        if grid is None:
            grid = tuple(2 * m for m in modes)
        else:
            grid = tuple(int(v) for v in np.atleast_1d(grid))
            if len(grid) == 1 and len(lengths) == 2:
                grid = grid * 2
        if len(grid) != len(lengths):
            raise ConfigError("grid must have one entry per axis", key="domain.N")
        if any(not (L > 0 and math.isfinite(L)) for L in lengths):
            raise ConfigError(f"lengths must be positive, got {lengths}", key="domain.lengths")
        if any(m < 1 for m in modes):
            raise ConfigError(f"modes must be >= 1, got {modes}", key="domain.n")
        if any(N < m for N, m in zip(grid, modes)):
            raise ConfigError(f"grid {grid} must be >= modes {modes} on every axis", key="domain.N")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "grid", grid)

    @classmethod
    def interval(cls, length=1.0, n=8, N=None):
        return cls((length,), (n,), None if N is None else (N,))

    @classmethod
    def rectangle(cls, lengths=(1.0, 1.0), n=(8, 8), N=None):
        return cls(tuple(lengths), tuple(np.atleast_1d(n)), N)

    def with_grid(self, grid):
        """Same modes and geometry, different collocation resolution."""
        return Domain(self.lengths, self.modes, grid, self.normalization)

    def with_modes(self, modes, grid=None):
        return Domain(self.lengths, modes, grid, self.normalization)

    @property
    def dim(self):
        return len(self.lengths)

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    @property
    def coeff_shape(self):
        return self.modes + (3,)

    @property
    def grid_shape(self):
        return self.grid + (3,)

    @property
    def cell_volume(self):
        return float(np.prod([L / N for L, N in zip(self.lengths, self.grid)]))

    @cached_property
    def _axes(self):
        return [_axis_matrices(n, N, L, self.normalization)
                for n, N, L in zip(self.modes, self.grid, self.lengths)]

    @property
    def nodes(self):
        """Collocation coordinates per axis."""
        return [a[0] for a in self._axes]

    def mesh(self):
        """Coordinate arrays of shape ``grid`` (one per axis)."""
        return np.meshgrid(*self.nodes, indexing="ij")

    @cached_property
    def _synth(self):
        return [a[1] for a in self._axes]

    @cached_property
    def _dsynth(self):
        return [a[2] for a in self._axes]

    @cached_property
    def _anal(self):
        return [np.ascontiguousarray((L / N) * a[1].T)
                for a, L, N in zip(self._axes, self.lengths, self.grid)]

    @cached_property
    def eigenvalues(self):
        """Neumann eigenvalues ``mu_k = sum_i (k_i pi / L_i)^2``, shape ``modes``."""
        grids = np.meshgrid(*[(np.pi * np.arange(n) / L) ** 2
                              for n, L in zip(self.modes, self.lengths)], indexing="ij")
        return np.sum(grids, axis=0)

    @cached_property
    def _mu3(self):
        return self.eigenvalues[..., None]

    def _apply(self, mats, arr):
        if self.dim == 1:
            return np.matmul(mats[0], arr)
        lead = arr.shape[:-3]
        n1, n2 = arr.shape[-3], arr.shape[-2]
        tmp = np.matmul(mats[0], arr.reshape(lead + (n1, n2 * 3)))
        tmp = tmp.reshape(lead + (mats[0].shape[0], n2, 3))
        return np.matmul(mats[1], tmp)

    # array-level transforms -------------------------------------------------

    def to_grid(self, coeffs):
        """Evaluate ``sum_k c_k e_k(x_j)`` at every node."""
        return self._apply(self._synth, coeffs)

    def to_coeffs(self, values):
        """Discrete inner products ``<f, e_k>_N`` with every retained mode."""
        return self._apply(self._anal, values)

    def gradient_grid(self, coeffs):
        """Partial derivatives ``d u / d x_i`` sampled on the grid, one array per axis."""
        out = []
        for i in range(self.dim):
            mats = [self._dsynth[j] if j == i else self._synth[j] for j in range(self.dim)]
            out.append(self._apply(mats, coeffs))
        return out

    def laplacian_coeffs(self, coeffs):
        return -self._mu3 * coeffs

    def spatial_axes(self, ndim):
        """Axes of a grid/coeff array holding the spatial indices and components."""
        return tuple(range(ndim - self.dim - 1, ndim))

    def grid_inner(self, f, g):
        """Midpoint-rule inner product, reduced over space and components."""
        return self.cell_volume * np.sum(f * g, axis=self.spatial_axes(np.ndim(f)))

    def grid_lp(self, f, p):
        """Quadrature L^p norm of the pointwise Euclidean magnitude of ``f``."""
        mag = np.sqrt(np.sum(f * f, axis=-1))
        axes = tuple(range(mag.ndim - self.dim, mag.ndim))
        if p == math.inf:
            return np.max(mag, axis=axes)
        return (self.cell_volume * np.sum(mag ** p, axis=axes)) ** (1.0 / p)

    def coeff_inner(self, c, d):
        return np.sum(c * d, axis=self.spatial_axes(np.ndim(c)))

    def h1_seminorm_sq(self, coeffs):
        return np.sum(self._mu3 * coeffs * coeffs, axis=self.spatial_axes(np.ndim(coeffs)))

    def hminus1_sq(self, coeffs):
        """Surrogate dual norm squared, ``sum (1 + mu_k)^-1 |c_k|^2``."""
        return np.sum(coeffs * coeffs / (1.0 + self._mu3),
                      axis=self.spatial_axes(np.ndim(coeffs)))

    def mode_mask(self, m):
        """Boolean mask over ``modes`` keeping multi-indices with every ``k_i < m``."""
        idx = np.meshgrid(*[np.arange(n) for n in self.modes], indexing="ij")
        return np.all([k < m for k in idx], axis=0)


def cross3(a, b):
    """Pointwise R^3 cross product along the last axis."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def dot3(a, b):
    return np.sum(a * b, axis=-1)


# field types --------------------------------------------------------------


class _Field:
    __slots__ = ()

    def _check(self, arr, shape, what):
        arr = np.asarray(arr, dtype=float)
        if arr.shape != shape:
            raise ConfigError(f"{what} shape {arr.shape} does not match domain shape {shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError(f"{what} contain non-finite entries")
        return arr

    def _same(self, other):
        if other.domain != self.domain:
            raise ConfigError("fields live on different domains")


@dataclass(frozen=True, eq=False)
class SpectralField(_Field):
    """Coefficients of an R^3 field with respect to the cosine basis."""

    domain: Domain
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", self._check(self.coeffs, self.domain.coeff_shape, "coefficients"))

    @classmethod
    def zeros(cls, domain):
        return cls(domain, np.zeros(domain.coeff_shape))

    def __add__(self, other):
        self._same(other)
        return SpectralField(self.domain, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same(other)
        return SpectralField(self.domain, self.coeffs - other.coeffs)

    def __mul__(self, alpha):
        return SpectralField(self.domain, float(alpha) * self.coeffs)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class GridField(_Field):
    """Samples of an R^3 field at the collocation nodes."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", self._check(self.values, self.domain.grid_shape, "grid values"))

    @classmethod
    def from_function(cls, domain, fn):
        """Sample ``fn(*coords) -> (3, *grid)`` or ``(*grid, 3)`` on the nodes."""
        vals = np.asarray(fn(*domain.mesh()), dtype=float)
        if vals.shape[0] == 3 and vals.shape != domain.grid_shape:
            vals = np.moveaxis(vals, 0, -1)
        return cls(domain, np.broadcast_to(vals, domain.grid_shape).copy())


# operations ---------------------------------------------------------------


def analyze(f):
    """Project a grid field onto the retained modes (discrete ``pi_n``)."""
    if not isinstance(f, GridField):
        raise ConfigError("analyze expects a GridField")
    return SpectralField(f.domain, f.domain.to_coeffs(f.values))


def synthesize(c):
    if not isinstance(c, SpectralField):
        raise ConfigError("synthesize expects a SpectralField")
    return GridField(c.domain, c.domain.to_grid(c.coeffs))


def laplacian(c):
    """Neumann Laplacian: coefficient ``k`` scaled by ``-mu_k``."""
    return SpectralField(c.domain, c.domain.laplacian_coeffs(c.coeffs))


def truncate(c, m):
    """Zero every multi-index with some ``k_i >= m``."""
    if int(m) < 1:
        raise ConfigError(f"truncation level must be >= 1, got {m}")
    if int(m) > max(c.domain.modes):
        raise ConfigError(f"truncation level {m} exceeds available modes {c.domain.modes}")
    mask = c.domain.mode_mask(int(m))
    return SpectralField(c.domain, c.coeffs * mask[..., None])


def cross(f, g):
    f._same(g)
    return GridField(f.domain, cross3(f.values, g.values))


def inner(a, b):
    """L^2 inner product: Parseval for spectral fields, midpoint rule for grid fields."""
    a._same(b)
    if isinstance(a, SpectralField) and isinstance(b, SpectralField):
        return float(a.domain.coeff_inner(a.coeffs, b.coeffs))
    if isinstance(a, GridField) and isinstance(b, GridField):
        return float(a.domain.grid_inner(a.values, b.values))
    raise ConfigError("inner product needs two fields of the same representation")


def _canonical_p(p):
    p = float(p)
    for q in SUPPORTED_P:
        if p == q or (math.isfinite(q) and abs(p - q) < 1e-12):
            return q
    raise ConfigError(f"unsupported exponent p={p}; supported: 1, 6/5, 3/2, 2, 6, inf")


def norm(f, kind="L2", p=None):
    """Norms used by the estimates.

    ``kind`` is one of ``"L2"``, ``"H1"`` (gradient seminorm), ``"Lp"`` (needs
    ``p``) or ``"Linf"``.  L2 and H1 use coefficients; Lp and Linf use grid
    quadrature / the maximum over nodes.
    """
    dom = f.domain
    if kind == "L2":
        if isinstance(f, SpectralField):
            return float(np.sqrt(dom.coeff_inner(f.coeffs, f.coeffs)))
        return float(dom.grid_lp(f.values, 2.0))
    if kind == "H1":
        c = f.coeffs if isinstance(f, SpectralField) else dom.to_coeffs(f.values)
        return float(np.sqrt(dom.h1_seminorm_sq(c)))
    if kind in ("Lp", "Linf"):
        q = math.inf if kind == "Linf" else _canonical_p(p)
        vals = f.values if isinstance(f, GridField) else dom.to_grid(f.coeffs)
        return float(dom.grid_lp(vals, q))
    raise ConfigError(f"unknown norm kind {kind!r}")
