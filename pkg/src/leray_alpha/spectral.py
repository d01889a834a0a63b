"""Divergence-free Fourier basis on the periodic torus [0, 2*pi)^2.

A velocity field is stored as one complex amplitude per retained wavevector,

    u(x) = sum_k c_k e_k exp(i k.x),     e_k = s(k) (-k2, k1) / |k|,

where the sign s(k) = +1 on the half plane {k1 > 0} u {k1 = 0, k2 > 0} and -1
otherwise, so that e_{-k} = e_k and a real field satisfies c_{-k} = conj(c_k).
Each e_k is orthogonal to k, hence every field is divergence free and the Stokes
operator acts diagonally with eigenvalue |k|^2.

Norms use the normalized measure dx / (2 pi)^2, so ||u||^2 = sum_k |c_k|^2 over
every retained mode (both members of each conjugate pair).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = [
    "Basis",
    "ConfigurationError",
    "GridField",
    "SpectralField",
    "WaveVector",
    "apply_semigroup",
    "apply_stokes_power",
    "build_basis",
    "fft_workers",
    "random_field",
    "single_mode",
    "sobolev_norm",
    "to_grid",
    "to_spectral",
    "two_mode",
]


class ConfigurationError(ValueError):
    """Raised for inconsistent discretization parameters."""


def fft_workers():
    """Thread count for the grid transforms, pinned by ``LAL_THREADS``."""
    try:
        return max(1, int(os.environ.get("LAL_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class WaveVector:
    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 == 0 and self.k2 == 0:
            raise ConfigurationError("the mean mode (0, 0) is not part of the basis")

    @property
    def eigenvalue(self):
        return self.k1 * self.k1 + self.k2 * self.k2


def _orientation(k):
    k1, k2 = k[..., 0], k[..., 1]
    return np.where((k1 > 0) | ((k1 == 0) & (k2 > 0)), 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class Basis:
    """Retained Fourier-Stokes modes, sorted by (|k|^2, k1, k2)."""

    grid_size: int
    k_max: int
    modes: np.ndarray = field(repr=False)

    def __post_init__(self):
        modes = np.ascontiguousarray(self.modes, dtype=np.int64)
        modes.setflags(write=False)
        object.__setattr__(self, "modes", modes)

    @property
    def size(self):
        return len(self.modes)

    def __len__(self):
        return len(self.modes)

    @cached_property
    def eigenvalues(self):
        lam = (self.modes**2).sum(axis=1).astype(float)
        lam.setflags(write=False)
        return lam

    @cached_property
    def wavevectors(self):
        return [WaveVector(int(a), int(b)) for a, b in self.modes]

    @cached_property
    def directions(self):
        """Unit vectors e_k, shape (m, 2)."""
        k = self.modes.astype(float)
        perp = np.stack([-k[:, 1], k[:, 0]], axis=1)
        e = perp * (_orientation(self.modes) / np.sqrt(self.eigenvalues))[:, None]
        e.setflags(write=False)
        return e

    @cached_property
    def fft_index(self):
        """Row/column positions of each mode in an N x N FFT array."""
        n = self.grid_size
        return self.modes[:, 0] % n, self.modes[:, 1] % n

    @cached_property
    def partner(self):
        """Index of -k for every mode k."""
        lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(self.modes)}
        return np.array([lookup[(-int(a), -int(b))] for a, b in self.modes])

    @cached_property
    def positive(self):
        """Indices of the half-plane representatives, in mode order."""
        return np.flatnonzero(_orientation(self.modes) > 0)

    @cached_property
    def max_sqrt_eigenvalue(self):
        return float(np.sqrt(self.eigenvalues.max()))

    def index_of(self, k):
        k = tuple(int(v) for v in k)
        hits = np.flatnonzero((self.modes[:, 0] == k[0]) & (self.modes[:, 1] == k[1]))
        if hits.size == 0:
            raise KeyError(f"wavevector {k} is not in the basis")
        return int(hits[0])

    def contains(self, k):
        try:
            self.index_of(k)
        except KeyError:
            return False
        return True

    def same_as(self, other):
        return (
            self is other
            or (
                self.grid_size == other.grid_size
                and self.modes.shape == other.modes.shape
                and bool(np.all(self.modes == other.modes))
            )
        )

    # real coordinates -------------------------------------------------
    # x = sqrt(2) (Re c_k, Im c_k) over the half-plane representatives; this
    # map is an isometry from symmetric coefficient vectors onto R^m.

    def to_real(self, coef):
        coef = np.asarray(coef)
        c = coef[..., self.positive] * np.sqrt(2.0)
        out = np.empty(coef.shape[:-1] + (self.size,))
        out[..., 0::2] = c.real
        out[..., 1::2] = c.imag
        return out

    def from_real(self, x):
        x = np.asarray(x, dtype=float)
        c = (x[..., 0::2] + 1j * x[..., 1::2]) / np.sqrt(2.0)
        coef = np.empty(x.shape[:-1] + (self.size,), dtype=complex)
        coef[..., self.positive] = c
        coef[..., self.partner[self.positive]] = np.conj(c)
        return coef

    def describe(self):
        return {
            "grid_size": self.grid_size,
            "k_max": self.k_max,
            "size": self.size,
            "modes": self.modes.tolist(),
        }


def _check_grid(grid_size, k_max):
    if not isinstance(grid_size, (int, np.integer)) or grid_size < 8 or grid_size & (grid_size - 1):
        raise ConfigurationError(f"grid_size must be a power of two >= 8, got {grid_size!r}")
    if not isinstance(k_max, (int, np.integer)) or not 1 <= k_max <= grid_size // 3:
        raise ConfigurationError(
            f"k_max must lie in [1, {grid_size // 3}] for grid_size={grid_size} "
            f"(2/3-rule dealiasing), got {k_max!r}"
        )


def build_basis(grid_size, k_max, n_modes=None, modes=None):
    """Build the sorted divergence-free basis.

    Parameters
    ----------
    grid_size : int
        Points per axis, a power of two >= 8.
    k_max : int
        Retention bound on max(|k1|, |k2|), at most ``grid_size // 3``.
    n_modes : int, optional
        Keep only the first ``n_modes`` modes of the sorted list (a Galerkin
        space V_m). The cut must not split a conjugate pair.
    modes : sequence of (k1, k2), optional
        Explicit subset of wavevectors; must be closed under k -> -k.
    """
    _check_grid(grid_size, k_max)
    r = np.arange(-k_max, k_max + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    full = np.stack([k1.ravel(), k2.ravel()], axis=1)
    full = full[(full[:, 0] != 0) | (full[:, 1] != 0)]
    lam = (full**2).sum(axis=1)
    full = full[np.lexsort((full[:, 1], full[:, 0], lam))]

    if modes is not None:
        wanted = {tuple(int(v) for v in k) for k in modes}
        if (0, 0) in wanted:
            raise ConfigurationError("the mean mode (0, 0) is not part of the basis")
        if any((-a, -b) not in wanted for a, b in wanted):
            raise ConfigurationError("explicit mode set must be closed under k -> -k")
        if any(max(abs(a), abs(b)) > k_max for a, b in wanted):
            raise ConfigurationError("explicit modes exceed k_max")
        full = np.array([k for k in full if (int(k[0]), int(k[1])) in wanted])
    if n_modes is not None:
        if not 2 <= n_modes <= len(full):
            raise ConfigurationError(f"n_modes must lie in [2, {len(full)}], got {n_modes}")
        kept = {(int(a), int(b)) for a, b in full[:n_modes]}
        if any((-a, -b) not in kept for a, b in kept):
            raise ConfigurationError(f"n_modes={n_modes} splits a conjugate pair")
        full = full[:n_modes]
    return Basis(grid_size=int(grid_size), k_max=int(k_max), modes=full)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real divergence-free field given by its mode amplitudes."""

    basis: Basis
    coef: np.ndarray = field(repr=False)

    def __post_init__(self):
        coef = np.array(self.coef, dtype=complex)
        if coef.shape != (self.basis.size,):
            raise ValueError(f"expected {self.basis.size} amplitudes, got shape {coef.shape}")
        if not np.all(np.isfinite(coef)):
            raise ValueError("non-finite amplitudes")
        scale = np.abs(coef).max(initial=0.0)
        if np.abs(coef[self.basis.partner] - np.conj(coef)).max(initial=0.0) > 1e-12 * max(scale, 1e-300):
            raise ValueError("amplitudes violate conjugate symmetry c(-k) = conj(c(k))")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    @classmethod
    def zeros(cls, basis):
        return cls(basis, np.zeros(basis.size, dtype=complex))

    @classmethod
    def from_real(cls, basis, x):
        return cls(basis, basis.from_real(x))

    def to_real(self):
        return self.basis.to_real(self.coef)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coef) ** 2)))

    def inner(self, other):
        return float(np.real(np.vdot(self.coef, other.coef)))

    def _check(self, other):
        if not self.basis.same_as(other.basis):
            raise ValueError("fields live on different bases")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.basis, self.coef + other.coef)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.basis, self.coef - other.coef)

    def __mul__(self, scalar):
        return SpectralField(self.basis, self.coef * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.basis, -self.coef)


@dataclass(frozen=True, eq=False)
class GridField:
    """Velocity samples on the uniform N x N grid, shape (N, N, 2)."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != v.shape[1] or v.shape[2] != 2:
            raise ValueError(f"grid field must have shape (N, N, 2), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite grid samples")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid_size(self):
        return self.values.shape[0]

    def norm(self):
        """L2 norm by grid quadrature (normalized measure)."""
        return float(np.sqrt(np.mean(np.sum(self.values**2, axis=-1))))


def grid_points(grid_size):
    x = 2 * np.pi * np.arange(grid_size) / grid_size
    return np.meshgrid(x, x, indexing="ij")


# batched transforms on raw arrays: coefficient arrays (..., m) <-> grid arrays (..., 2, N, N)

def synthesize(basis, coef):
    coef = np.asarray(coef)
    n = basis.grid_size
    spec = np.zeros(coef.shape[:-1] + (2, n, n), dtype=complex)
    i1, i2 = basis.fft_index
    amp = coef[..., None, :] * basis.directions.T * (n * n)
    spec[..., i1, i2] = amp
    return scipy.fft.ifft2(spec, axes=(-2, -1), workers=fft_workers()).real


def analyze(basis, grid):
    """Forward transform, Leray projection and truncation to the basis."""
    grid = np.asarray(grid, dtype=float)
    n = basis.grid_size
    spec = scipy.fft.fft2(grid, axes=(-2, -1), workers=fft_workers())
    i1, i2 = basis.fft_index
    comp = spec[..., i1, i2] / (n * n)
    return np.einsum("...jm,mj->...m", comp, basis.directions)


def gradient_grid(basis, coef):
    """Grid samples of d_j u_i, shape (..., 2 [i], 2 [j], N, N)."""
    coef = np.asarray(coef)
    n = basis.grid_size
    spec = np.zeros(coef.shape[:-1] + (2, 2, n, n), dtype=complex)
    i1, i2 = basis.fft_index
    k = basis.modes.astype(float)
    amp = coef[..., None, None, :] * basis.directions.T[:, None, :] * (1j * k.T)[None, :, :] * (n * n)
    spec[..., i1, i2] = amp
    return scipy.fft.ifft2(spec, axes=(-2, -1), workers=fft_workers()).real


def to_grid(u):
    """Render a spectral field on the physical grid."""
    g = synthesize(u.basis, u.coef)
    return GridField(np.moveaxis(g, 0, -1))


def to_spectral(g, basis):
    """Project grid samples onto the divergence-free basis."""
    values = g.values if isinstance(g, GridField) else np.asarray(g, dtype=float)
    if values.shape[:2] != (basis.grid_size, basis.grid_size):
        raise ValueError(
            f"grid of size {values.shape[0]} does not match basis grid_size {basis.grid_size}"
        )
    coef = analyze(basis, np.moveaxis(values, -1, 0))
    # restore exact conjugate symmetry lost to rounding
    coef = 0.5 * (coef + np.conj(coef[basis.partner]))
    return SpectralField(basis, coef)


def _check_power(r):
    if not -2.0 <= r <= 2.0:
        raise ValueError(f"operator power must lie in [-2, 2], got {r}")


def apply_stokes_power(u, r):
    _check_power(r)
    if r == 0:
        return u
    return SpectralField(u.basis, u.coef * u.basis.eigenvalues**r)


def apply_semigroup(u, t):
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    if t == 0:
        return u
    return SpectralField(u.basis, u.coef * np.exp(-t * u.basis.eigenvalues))


def sobolev_norm(u, r):
    """(u, A^r u)^(1/2), the norm of D(A^(r/2))."""
    _check_power(r)
    return float(np.sqrt(np.sum(u.basis.eigenvalues**r * np.abs(u.coef) ** 2)))


def sobolev_norms(basis, coef, r):
    """Row-wise version of :func:`sobolev_norm` for coefficient arrays (..., m)."""
    return np.sqrt(np.sum(basis.eigenvalues**r * np.abs(coef) ** 2, axis=-1))


def single_mode(basis, k, amplitude=1.0):
    """Real single-mode field with L2 norm |amplitude|.

    The amplitude is split evenly over the pair (k, -k):
    c_k = amplitude / sqrt(2), c_{-k} = conj(c_k).
    """
    i = basis.index_of(k)
    coef = np.zeros(basis.size, dtype=complex)
    a = complex(amplitude) / np.sqrt(2.0)
    coef[i] = a
    coef[basis.partner[i]] = np.conj(a)
    return SpectralField(basis, coef)


def two_mode(basis, amplitude=1.0, k=(1, 0), q=(0, 1)):
    """Sum of two single modes with equal share of the L2 norm ``amplitude``."""
    a = amplitude / np.sqrt(2.0)
    return single_mode(basis, k, a) + single_mode(basis, q, a)


def random_field(basis, rng, amplitude=1.0, k_band=None, decay=0.0):
    """Random real field normalized to L2 norm ``amplitude``.

    ``k_band`` restricts support to max(|k1|, |k2|) <= k_band; ``decay`` damps
    amplitudes by lambda^(-decay / 2).
    """
    rng = np.random.default_rng(rng)
    x = rng.standard_normal(basis.size)
    coef = basis.from_real(x)
    if k_band is not None:
        coef[np.abs(basis.modes).max(axis=1) > k_band] = 0.0
    if decay:
        coef = coef * basis.eigenvalues ** (-0.5 * decay)
    nrm = np.sqrt(np.sum(np.abs(coef) ** 2))
    if nrm == 0:
        return SpectralField.zeros(basis)
    return SpectralField(basis, coef * (amplitude / nrm))
