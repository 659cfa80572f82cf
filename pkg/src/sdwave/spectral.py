"""Dirichlet sine eigenbasis on the box (0, pi)^d.

Fields are stored as coefficient arrays of shape ``(N,) * d`` over the
orthonormal basis

    phi_k(x) = (2/pi)^(d/2) * prod_i sin(k_i x_i),   k_i = 1..N,

with -Delta phi_k = |k|^2 phi_k.  Pointwise work happens on an interior
collocation grid with ``M - 1`` points per axis, ``x_j = j*pi/M``; the
transform pair is a type-I discrete sine transform per axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = [
    "BasisSpec",
    "SpectralField",
    "GridField",
    "eigenvalue",
    "first_eigenvalue",
    "to_grid",
    "to_coeffs",
    "to_grid_dense",
    "to_coeffs_dense",
    "to_grid_dst",
    "to_coeffs_dst",
    "sobolev_norm",
    "inner_product",
    "grid_lp_norm",
]

# scipy.fft worker count; set by the CLI thread option
_FFT_WORKERS = 1
# "auto" uses per-axis dense products on small grids (faster than the DST
# call overhead there) and the fast sine transform otherwise
_BACKEND = "auto"
DENSE_MAX_POINTS = 48


def set_fft_workers(n: int) -> None:
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def set_transform_backend(name: str) -> None:
    global _BACKEND
    if name not in ("auto", "dst", "dense"):
        raise ValueError(f"unknown transform backend {name!r}")
    _BACKEND = name


def _use_dense(basis: "BasisSpec") -> bool:
    if _BACKEND == "auto":
        return basis.intervals - 1 <= DENSE_MAX_POINTS
    return _BACKEND == "dense"


@dataclass(frozen=True)
class BasisSpec:
    """Truncated product-sine basis on (0, pi)^d."""

    dimension: int
    modes: int
    oversampling: Fraction = Fraction(3, 2)

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension}")
        if int(self.modes) != self.modes or self.modes < 1:
            raise ValueError(f"modes_per_dim must be a positive integer, got {self.modes}")
        q = Fraction(self.oversampling).limit_denominator(1000)
        if q < 1:
            raise ValueError(f"oversampling must be >= 1, got {self.oversampling}")
        object.__setattr__(self, "oversampling", q)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes,) * self.dimension

    @property
    def size(self) -> int:
        return self.modes**self.dimension

    @cached_property
    def intervals(self) -> int:
        """Grid intervals M per axis; the grid has M - 1 interior points."""
        return math.ceil(self.oversampling * self.modes) + 1

    @cached_property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.intervals - 1,) * self.dimension

    @cached_property
    def cell_volume(self) -> float:
        """Quadrature weight (pi/M)^d of every interior grid point."""
        return (math.pi / self.intervals) ** self.dimension

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        k2 = np.arange(1, self.modes + 1, dtype=float) ** 2
        lam = np.zeros(self.shape)
        for axis in range(self.dimension):
            shp = [1] * self.dimension
            shp[axis] = self.modes
            lam = lam + k2.reshape(shp)
        lam.setflags(write=False)
        return lam

    @cached_property
    def grid_points(self) -> np.ndarray:
        """Interior collocation nodes of one axis."""
        M = self.intervals
        return np.arange(1, M) * (math.pi / M)

    @cached_property
    def _axis_matrix(self) -> np.ndarray:
        # S[j, k] = sqrt(2/pi) sin((k+1) x_j)
        x = self.grid_points
        k = np.arange(1, self.modes + 1)
        return math.sqrt(2.0 / math.pi) * np.sin(np.outer(x, k))

    @cached_property
    def _axis_projector(self) -> np.ndarray:
        return np.ascontiguousarray((math.pi / self.intervals) * self._axis_matrix.T)

    def zeros(self) -> "SpectralField":
        return SpectralField(self, np.zeros(self.shape))

    def mode(self, k, amplitude: float = 1.0) -> "SpectralField":
        """Single orthonormal mode with multi-index ``k`` (1-based)."""
        k = tuple(int(i) for i in np.atleast_1d(k))
        if len(k) != self.dimension or min(k) < 1 or max(k) > self.modes:
            raise ValueError(f"multi-index {k} outside basis {self.shape}")
        c = np.zeros(self.shape)
        c[tuple(i - 1 for i in k)] = amplitude
        return SpectralField(self, c)

    def sine_product(self, k, amplitude: float = 1.0) -> "SpectralField":
        """The unnormalized function amplitude * prod_i sin(k_i x_i)."""
        return self.mode(k, amplitude * (math.pi / 2.0) ** (self.dimension / 2.0))


@dataclass(frozen=True, eq=False)
class SpectralField:
    basis: BasisSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != self.basis.shape:
            if c.size == self.basis.size:
                c = c.reshape(self.basis.shape)
            else:
                raise ValueError(f"coefficient shape {c.shape} does not match basis {self.basis.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite spectral coefficients")
        object.__setattr__(self, "coeffs", c)

    def _check(self, other: "SpectralField") -> None:
        if other.basis != self.basis:
            raise ValueError("basis mismatch")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.basis, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(self.basis, -self.coeffs)

    def __mul__(self, scalar: float):
        return SpectralField(self.basis, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def laplacian(self) -> "SpectralField":
        return SpectralField(self.basis, -self.basis.eigenvalues * self.coeffs)

    def apply_power(self, s: float) -> "SpectralField":
        """(-Delta)^s applied spectrally."""
        return SpectralField(self.basis, self.basis.eigenvalues**s * self.coeffs)


@dataclass(frozen=True, eq=False)
class GridField:
    basis: BasisSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.basis.grid_shape:
            raise ValueError(f"grid shape {v.shape} does not match {self.basis.grid_shape}")
        object.__setattr__(self, "values", v)


def eigenvalue(k) -> float:
    k = np.atleast_1d(np.asarray(k))
    if np.any(k < 1):
        raise ValueError("multi-index components must be >= 1")
    return float(np.sum(k.astype(float) ** 2))


def first_eigenvalue(basis: BasisSpec) -> float:
    return float(basis.eigenvalues.min())


# -- transforms ------------------------------------------------------------

def _pad_slices(basis: BasisSpec):
    return tuple(slice(0, basis.modes) for _ in range(basis.dimension))


def _dense_apply(mat: np.ndarray, arr: np.ndarray) -> np.ndarray:
    """Apply ``mat`` along every axis of ``arr`` (d <= 3)."""
    d = arr.ndim
    p, q = mat.shape
    if d == 1:
        return mat @ arr
    if d == 2:
        return mat @ arr @ mat.T
    t = (mat @ arr.reshape(q, q * q)).reshape(p, q, q) @ mat.T
    return np.swapaxes(np.swapaxes(t, 1, 2) @ mat.T, 1, 2)


def coeffs_to_grid(basis: BasisSpec, c: np.ndarray) -> np.ndarray:
    """Raw-array version of :func:`to_grid` (hot path of the integrator)."""
    if _use_dense(basis):
        return _dense_apply(basis._axis_matrix, c)
    return coeffs_to_grid_dst(basis, c)


def grid_to_coeffs(basis: BasisSpec, u: np.ndarray) -> np.ndarray:
    """Raw-array version of :func:`to_coeffs`: projection onto the first N modes."""
    if _use_dense(basis):
        return _dense_apply(basis._axis_projector, u)
    return grid_to_coeffs_dst(basis, u)


def coeffs_to_grid_dst(basis: BasisSpec, c: np.ndarray) -> np.ndarray:
    full = np.zeros(basis.grid_shape)
    full[_pad_slices(basis)] = c
    scale = (basis.intervals / math.pi) ** (basis.dimension / 2.0)
    return scale * scipy.fft.dstn(full, type=1, norm="ortho", workers=_FFT_WORKERS)


def grid_to_coeffs_dst(basis: BasisSpec, u: np.ndarray) -> np.ndarray:
    """Type-I DST of the grid values, truncated to N modes per axis."""
    scale = (math.pi / basis.intervals) ** (basis.dimension / 2.0)
    full = scipy.fft.dstn(u, type=1, norm="ortho", workers=_FFT_WORKERS)
    return scale * full[_pad_slices(basis)]


def to_grid(f: SpectralField) -> GridField:
    return GridField(f.basis, coeffs_to_grid(f.basis, f.coeffs))


def to_coeffs(g: GridField) -> SpectralField:
    if g.values.shape != g.basis.grid_shape:
        raise ValueError("grid shape mismatch")
    return SpectralField(g.basis, grid_to_coeffs(g.basis, g.values))


def to_grid_dense(f: SpectralField) -> GridField:
    """Dense-matrix evaluation of the sine series."""
    return GridField(f.basis, _dense_apply(f.basis._axis_matrix, f.coeffs))


def to_coeffs_dense(g: GridField) -> SpectralField:
    """Dense quadrature projection onto the first N modes."""
    return SpectralField(g.basis, _dense_apply(g.basis._axis_projector, g.values))


def to_grid_dst(f: SpectralField) -> GridField:
    return GridField(f.basis, coeffs_to_grid_dst(f.basis, f.coeffs))


def to_coeffs_dst(g: GridField) -> SpectralField:
    return SpectralField(g.basis, grid_to_coeffs_dst(g.basis, g.values))


# -- norms -------------------------------------------------------------------

def sobolev_norm(f: SpectralField, s: float) -> float:
    """(sum_k lambda_k^s c_k^2)^(1/2) for s in [-2, 2]."""
    if not -2.0 <= s <= 2.0:
        raise ValueError(f"Sobolev order {s} outside [-2, 2]")
    return float(np.sqrt(np.sum(f.basis.eigenvalues**s * f.coeffs**2)))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    if f.basis != g.basis:
        raise ValueError("basis mismatch")
    return float(np.sum(f.coeffs * g.coeffs))


def grid_integral(basis: BasisSpec, values: np.ndarray) -> float:
    """Equal-weight quadrature over the interior grid."""
    return float(basis.cell_volume * np.sum(values))


def grid_lp_norm(basis: BasisSpec, values: np.ndarray, p: float) -> float:
    return grid_integral(basis, np.abs(values) ** p) ** (1.0 / p)
