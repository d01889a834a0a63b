"""Time integration of the Galerkin Leray-alpha, Oseen and adjoint Oseen systems.

All three share one step.  With G(h) = A + P((h . grad) .) (diffusion plus
advection by a frozen drift h) and forcing F_n = P(mask v_n) + f_n,

    y+      = y_n + dt/2 F_n
    w       = (I + dt/2 G)^-1 (I - dt/2 G) y+,      G = G((h_n + h_{n+1}) / 2)
    y_{n+1} = w + dt/2 F_{n+1}

For the Leray-alpha system the drift is h_n = filter(y_n), so the midpoint drift
is filter((y_n + y_{n+1}) / 2) and the step is solved by fixed-point iteration.
The Oseen system with h = filter(y) therefore has exactly the Leray-alpha
solution as its fixed point.  Because the advection operator is skew, the
unforced step satisfies the discrete energy identity with zero residual, and
the adjoint sweep phi_n = S_n^T phi_{n+1} gives the exact duality

    (y_M, phi_M) - (y_0, phi_0) = sum_n c_n dt (F_n, phi_n),

with trapezoid weights c_0 = c_M = 1/2 and c_n = 1 otherwise.

Small bases use dense operators assembled from the analytic triad
interactions; large bases use dealiased pseudospectral products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .filtering import FilterParams, filter_coef
from .spectral import (
    Basis,
    GridField,
    SpectralField,
    analyze,
    gradient_grid,
    grid_points,
    sobolev_norms,
    synthesize,
)

__all__ = [
    "ControlMask",
    "ControlSignal",
    "EnergyReport",
    "OseenDrift",
    "Propagator",
    "PropertyFailure",
    "SimulationError",
    "TimeGrid",
    "Trajectory",
    "advect",
    "duhamel_reconstruct",
    "energy_report",
    "regularization_times",
    "simulate_adjoint",
    "simulate_leray",
    "simulate_oseen",
    "trapezoid_weights",
]

DENSE_LIMIT = 64
BLOWUP_FACTOR = 1e6


class SimulationError(RuntimeError):
    """Non-finite or runaway state, or a failed implicit solve."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class PropertyFailure(AssertionError):
    """A property guaranteed by the analysis failed on a computed trajectory."""


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"number of steps M must be an integer >= 2, got {self.M}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "M", int(self.M))

    @property
    def dt(self):
        return self.T / self.M

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.M + 1)

    def shifted(self, extra_steps):
        """Grid with the same step extended by ``extra_steps``."""
        return TimeGrid(self.dt * (self.M + extra_steps), self.M + extra_steps)


def trapezoid_weights(g):
    c = np.ones(g.M + 1)
    c[0] = c[-1] = 0.5
    return c


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled states; ``coef`` has shape (M + 1, m)."""

    time_grid: TimeGrid
    basis: Basis
    coef: np.ndarray = field(repr=False)

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=complex)
        if coef.shape != (self.time_grid.M + 1, self.basis.size):
            raise ValueError(
                f"trajectory shape {coef.shape} does not match "
                f"({self.time_grid.M + 1}, {self.basis.size})"
            )
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    def __len__(self):
        return self.time_grid.M + 1

    def __getitem__(self, n):
        return SpectralField(self.basis, self.coef[n])

    @property
    def states(self):
        return [self[n] for n in range(len(self))]

    @property
    def initial(self):
        return self[0]

    @property
    def terminal(self):
        return self[-1]

    def norms(self, r=0.0):
        return sobolev_norms(self.basis, self.coef, r)

    def filtered(self, alpha):
        return Trajectory(self.time_grid, self.basis, filter_coef(self.basis, self.coef, alpha))

    def l2q_distance(self, other):
        """L2(0, T; L2) distance by trapezoidal quadrature."""
        d2 = np.sum(np.abs(self.coef - other.coef) ** 2, axis=1)
        return float(np.sqrt(self.time_grid.dt * np.sum(trapezoid_weights(self.time_grid) * d2)))

    def c0_distance(self, other):
        return float(np.max(np.sqrt(np.sum(np.abs(self.coef - other.coef) ** 2, axis=1))))


@dataclass(frozen=True, eq=False)
class ControlMask:
    """Weights in [0, 1] on the grid marking the control region."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("mask must be an N x N array")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValueError("mask values must lie in [0, 1]")
        if not np.any(v > 0):
            raise ValueError("mask must have at least one positive entry")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid_size(self):
        return self.values.shape[0]

    @classmethod
    def full(cls, grid_size):
        return cls(np.ones((grid_size, grid_size)))

    @classmethod
    def rectangle(cls, grid_size, x_range, y_range, rolloff=0.0):
        """Indicator of [x0, x1) x [y0, y1), optionally smoothed over ``rolloff``.

        With ``rolloff > 0`` the edges ramp as a raised cosine of that width
        placed inside the rectangle.
        """
        x1, x2 = grid_points(grid_size)

        def ramp(x, lo, hi):
            if hi <= lo:
                raise ValueError(f"empty interval [{lo}, {hi}]")
            if rolloff <= 0:
                return ((x >= lo) & (x < hi)).astype(float)
            d = np.minimum(x - lo, hi - x)
            out = np.clip(d / rolloff, 0.0, 1.0)
            return np.where(d < 0, 0.0, 0.5 - 0.5 * np.cos(np.pi * out))

        return cls(ramp(x1, *x_range) * ramp(x2, *y_range))

    def area_fraction(self):
        return float(self.values.mean())


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Controls sampled at the grid times; ``values`` has shape (M + 1, N, N, 2)."""

    time_grid: TimeGrid
    values: np.ndarray = field(repr=False)
    mask: ControlMask

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        n = self.mask.grid_size
        if v.shape != (self.time_grid.M + 1, n, n, 2):
            raise ValueError(f"control shape {v.shape} does not match (M+1, N, N, 2)")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite control values")
        sup = np.abs(v).max(initial=0.0)
        off = np.abs(v[:, self.mask.values == 0]).max(initial=0.0)
        if off > 1e-12 * sup:
            raise ValueError("control does not vanish outside the control region")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, time_grid, mask):
        n = mask.grid_size
        return cls(time_grid, np.zeros((time_grid.M + 1, n, n, 2)), mask)

    @classmethod
    def from_grid_array(cls, time_grid, arr, mask):
        """Build from component-first samples of shape (M + 1, 2, N, N)."""
        return cls(time_grid, np.moveaxis(arr, -3, -1), mask)

    def __getitem__(self, n):
        return GridField(self.values[n])

    def l2_norms(self):
        """||v(t_n)||_{L2(omega)} for every grid time."""
        return np.sqrt(np.mean(np.sum(self.values**2, axis=-1), axis=(1, 2)))

    def linf_l2(self):
        return float(self.l2_norms().max())

    def l2_l2(self):
        g = self.time_grid
        return float(np.sqrt(g.dt * np.sum(trapezoid_weights(g) * self.l2_norms() ** 2)))

    def is_zero(self):
        return not np.any(self.values)

    def forcing(self, basis):
        """P(mask v_n) on ``basis``, shape (M + 1, m)."""
        if self.is_zero():
            return np.zeros((self.time_grid.M + 1, basis.size), dtype=complex)
        g = np.moveaxis(self.values, -1, -3) * self.mask.values
        return analyze(basis, g)


@dataclass(frozen=True, eq=False)
class OseenDrift:
    """Transporting field sampled at the grid times; ``coef`` is (M + 1, m_h)."""

    time_grid: TimeGrid
    basis: Basis
    coef: np.ndarray = field(repr=False)

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=complex)
        if coef.shape != (self.time_grid.M + 1, self.basis.size):
            raise ValueError("drift shape does not match its time grid and basis")
        if not np.all(np.isfinite(coef)):
            raise ValueError("non-finite drift")
        coef.setflags(write=False)
        object.__setattr__(self, "coef", coef)

    @classmethod
    def zeros(cls, time_grid, basis):
        return cls(time_grid, basis, np.zeros((time_grid.M + 1, basis.size), dtype=complex))

    @classmethod
    def from_trajectory(cls, tr, alpha=0.0):
        """Drift given by the filtered states of ``tr``."""
        return cls(tr.time_grid, tr.basis, filter_coef(tr.basis, tr.coef, alpha))

    def is_zero(self):
        return not np.any(self.coef)

    def sup_norm(self):
        """max over t of the grid sup norm of |h(t)|."""
        if self.is_zero():
            return 0.0
        g = synthesize(self.basis, self.coef)
        return float(np.sqrt(np.max(np.sum(g**2, axis=-3))))


# ---------------------------------------------------------------------------
# advection


class _Triads:
    """Sparse analytic form of P((h . grad) u) between two bases.

    A drift mode l and a state mode q interact into the state mode p with
    k_p = k_l + k_q, with coefficient i (e_l . k_q) (e_q . e_p).
    """

    def __init__(self, drift_basis, basis):
        pos = {(int(a), int(b)): i for i, (a, b) in enumerate(basis.modes)}
        ls, qs, ps = [], [], []
        for l, kl in enumerate(drift_basis.modes):
            for q, kq in enumerate(basis.modes):
                p = pos.get((int(kl[0] + kq[0]), int(kl[1] + kq[1])))
                if p is not None:
                    ls.append(l)
                    qs.append(q)
                    ps.append(p)
        ls, qs, ps = (np.array(a, dtype=np.int64) for a in (ls, qs, ps))
        el = drift_basis.directions[ls]
        kq = basis.modes[qs].astype(float)
        eq = basis.directions[qs]
        ep = basis.directions[ps]
        coeff = 1j * np.sum(el * kq, axis=1) * np.sum(eq * ep, axis=1)
        keep = coeff != 0
        self.l, self.q, self.p = ls[keep], qs[keep], ps[keep]
        self.coeff = coeff[keep]
        self.m = basis.size
        self.flat = self.p * self.m + self.q

    def matrix(self, h):
        vals = h[self.l] * self.coeff
        size = self.m * self.m
        re = np.bincount(self.flat, weights=vals.real, minlength=size)
        im = np.bincount(self.flat, weights=vals.imag, minlength=size)
        return (re + 1j * im).reshape(self.m, self.m)


def _advect_fft(drift_basis, h, basis, u):
    hg = synthesize(drift_basis, h)
    du = gradient_grid(basis, u)
    prod = np.einsum("...jxy,...ijxy->...ixy", hg, du)
    return analyze(basis, prod)


def _check_alias_free(drift_basis, basis):
    if drift_basis.grid_size != basis.grid_size:
        raise ValueError("drift and state must share the grid size")
    if drift_basis.k_max + 2 * basis.k_max >= basis.grid_size:
        raise ValueError("drift band too wide for alias-free products on this grid")


def advect(z, y):
    """P((z . grad) y), dealiased and truncated to the basis of ``y``."""
    _check_alias_free(z.basis, y.basis)
    if not np.any(z.coef) or not np.any(y.coef):
        return SpectralField.zeros(y.basis)
    out = _advect_fft(z.basis, z.coef, y.basis, y.coef)
    out = 0.5 * (out + np.conj(out[y.basis.partner]))
    return SpectralField(y.basis, out)


# ---------------------------------------------------------------------------
# propagator


class Propagator:
    """Stepping machinery for one basis and time step.

    Works on raw coefficient arrays; the public ``simulate_*`` functions wrap it.
    ``backend`` is ``"dense"``, ``"fft"`` or ``"auto"`` (dense up to 64 modes).
    """

    max_inner = 200

    def __init__(self, basis, dt, drift_basis=None, backend="auto"):
        drift_basis = basis if drift_basis is None else drift_basis
        _check_alias_free(drift_basis, basis)
        if backend == "auto":
            backend = "dense" if basis.size <= DENSE_LIMIT and drift_basis.size <= 4 * DENSE_LIMIT else "fft"
        if backend not in ("dense", "fft"):
            raise ValueError(f"unknown backend {backend!r}")
        self.basis = basis
        self.drift_basis = drift_basis
        self.dt = float(dt)
        self.backend = backend
        lam = basis.eigenvalues
        self.lam = lam
        self.C = 1.0 / (1.0 + 0.5 * self.dt * lam)
        self.E = 1.0 - 0.5 * self.dt * lam
        self.decay = self.C * self.E

    @cached_property
    def triads(self):
        return _Triads(self.drift_basis, self.basis)

    def advect(self, h, u):
        """P((h . grad) u) on raw arrays; h may be batched like u or a single vector."""
        if self.backend == "dense":
            return u @ self.triads.matrix(h).T
        return _advect_fft(self.drift_basis, h, self.basis, u)

    def advect_matrix(self, h):
        return self.triads.matrix(h)

    def drift_sup_bound(self, h):
        return float(np.sum(np.abs(h)))

    # --- one step ---------------------------------------------------------

    def flow(self, y, h):
        """(I + dt/2 G)^-1 (I - dt/2 G) y with G = A + P((h . grad) .)."""
        if h is None or not np.any(h):
            return self.decay * y
        dt = self.dt
        if self.backend == "dense":
            n_mat = self.triads.matrix(h)
            eye = np.eye(self.basis.size)
            lhs = eye + 0.5 * dt * (np.diag(self.lam) + n_mat)
            rhs = (self.E * y) - 0.5 * dt * (y @ n_mat.T)
            return np.linalg.solve(lhs, rhs.T).T
        base = self.C * (self.E * y)
        w = base
        return self._iterate(lambda w: base - 0.5 * dt * self.C * self.advect(h, y + w), w)

    def flow_adjoint(self, phi, h):
        """Transpose of :meth:`flow` with respect to the real inner product."""
        if h is None or not np.any(h):
            return self.decay * phi
        dt = self.dt
        if self.backend == "dense":
            n_mat = self.triads.matrix(h)
            eye = np.eye(self.basis.size)
            lhs = eye + 0.5 * dt * (np.diag(self.lam) + n_mat)
            psi = np.linalg.solve(lhs.conj().T, phi.T).T
            return self.E * psi - 0.5 * dt * (psi @ n_mat.conj())
        base = self.C * phi
        psi = self._iterate(lambda p: base + 0.5 * dt * self.C * self.advect(h, p), base)
        return self.E * psi + 0.5 * dt * self.advect(h, psi)

    def _iterate(self, update, w):
        prev = np.inf
        for _ in range(self.max_inner):
            new = update(w)
            inc = np.max(np.abs(new - w), initial=0.0)
            scale = max(np.max(np.abs(new), initial=0.0), 1e-300)
            w = new
            if inc <= 1e-15 * scale or (inc >= prev and inc <= 1e-12 * scale):
                return w
            prev = inc
        if inc > 1e-10 * scale:
            raise SimulationError("implicit step did not converge; reduce dt or drift")
        return w

    # --- sweeps -----------------------------------------------------------

    def _check_drift(self, drift):
        if drift is None or not np.any(drift):
            return
        sup = float(np.max(np.sum(np.abs(drift), axis=-1)))
        if self.dt * max(1.0, sup) <= 0.5:
            return
        g = synthesize(self.drift_basis, drift)
        sup = float(np.sqrt(np.max(np.sum(g**2, axis=-3))))
        if self.dt > 0.5 / max(1.0, sup):
            raise ValueError(
                f"dt={self.dt:g} exceeds 0.5/max(1, sup|h|) = {0.5 / max(1.0, sup):g}"
            )

    def forward(self, y0, drift=None, forcing=None):
        """Oseen sweep.  ``drift`` is (M + 1, m_h) or None, ``forcing`` (M + 1, m) or None."""
        n_steps = (drift.shape[0] if drift is not None else forcing.shape[0]) - 1
        self._check_drift(drift)
        y0 = np.asarray(y0, dtype=complex)
        out = np.empty((n_steps + 1,) + y0.shape, dtype=complex)
        out[0] = y0
        y = y0
        half = 0.5 * self.dt
        zero_drift = drift is None or not np.any(drift)
        ref = self._reference(y0, forcing)
        for n in range(n_steps):
            yp = y if forcing is None else y + half * forcing[n]
            h = None if zero_drift else 0.5 * (drift[n] + drift[n + 1])
            w = self.flow(yp, h)
            y = self._real(w if forcing is None else w + half * forcing[n + 1])
            out[n + 1] = y
            self._guard(y, ref, n + 1)
        return out

    def backward(self, phi_T, drift, n_steps):
        self._check_drift(drift)
        phi_T = np.asarray(phi_T, dtype=complex)
        out = np.empty((n_steps + 1,) + phi_T.shape, dtype=complex)
        out[n_steps] = phi_T
        zero_drift = drift is None or not np.any(drift)
        ref = self._reference(phi_T, None)
        for n in range(n_steps - 1, -1, -1):
            h = None if zero_drift else 0.5 * (drift[n] + drift[n + 1])
            out[n] = self._real(self.flow_adjoint(out[n + 1], h))
            self._guard(out[n], ref, n)
        return out

    def leray(self, y0, alpha, n_steps, forcing=None, closure=None):
        """Nonlinear sweep with drift closure(y) (the Helmholtz filter by default)."""
        if self.drift_basis is not self.basis and not self.drift_basis.same_as(self.basis):
            raise ValueError("the Leray-alpha sweep needs drift and state on one basis")
        if closure is None:
            def closure(c):
                return filter_coef(self.basis, c, alpha) if alpha else c
        half = 0.5 * self.dt
        y = np.asarray(y0, dtype=complex)
        out = np.empty((n_steps + 1, self.basis.size), dtype=complex)
        out[0] = y
        ref = self._reference(y, forcing)
        for n in range(n_steps):
            yp = y if forcing is None else y + half * forcing[n]
            kick = 0.0 if forcing is None else half * forcing[n + 1]
            base = self.C * (self.E * yp)
            if not np.any(yp) and not np.any(kick):
                w = base
            else:
                def update(w):
                    h = closure(0.5 * (y + w + kick))
                    return base - half * self.C * self.advect(h, yp + w)
                w = self._iterate(update, base)
                self._check_step_drift(closure(0.5 * (y + w + kick)), n)
            y = self._real(w + kick)
            out[n + 1] = y
            self._guard(y, ref, n + 1)
        return out

    def _check_step_drift(self, h, n):
        bound = self.drift_sup_bound(h)
        if self.dt * max(1.0, bound) <= 0.5:
            return
        g = synthesize(self.basis, h)
        sup = float(np.sqrt(np.max(np.sum(g**2, axis=0))))
        if self.dt > 0.5 / max(1.0, sup):
            raise SimulationError(
                f"dt={self.dt:g} exceeds the advection limit 0.5/max(1, sup|z|)={0.5 / max(1.0, sup):g}",
                step=n,
            )

    def _real(self, y):
        # rounding breaks c(-k) = conj(c(k)) at the 1e-16 level; under strong
        # cancellation (controlled states) that becomes visible, so re-impose it
        return 0.5 * (y + np.conj(y[..., self.basis.partner]))

    def _reference(self, y0, forcing):
        ref = float(np.linalg.norm(y0))
        if forcing is not None:
            ref += self.dt * len(forcing) * float(np.max(np.linalg.norm(forcing, axis=-1)))
        return ref

    @staticmethod
    def _guard(y, ref, n):
        mag = float(np.linalg.norm(y))
        if not np.isfinite(mag):
            raise SimulationError("non-finite state", step=n)
        if mag > BLOWUP_FACTOR * ref:
            raise SimulationError("state exceeded the blow-up guard", step=n)

    def step_matrix(self, h):
        """Real m x m matrix of one unforced step in real coordinates."""
        b = self.basis
        cols = b.from_real(np.eye(b.size))
        return b.to_real(self.flow(cols, h)).T


def _forcing(basis, g, v, source):
    f = None
    if v is not None and not v.is_zero():
        if v.time_grid != g:
            raise ValueError("control and simulation use different time grids")
        f = v.forcing(basis)
    if source is not None:
        s = source.coef if isinstance(source, Trajectory) else np.asarray(source)
        f = s.astype(complex) if f is None else f + s
    return f


def simulate_leray(y0, v, p, g, source=None, backend="auto", closure=None):
    """Controlled Leray-alpha trajectory on the basis of ``y0``."""
    alpha = p.alpha if isinstance(p, FilterParams) else FilterParams(p).alpha
    prop = Propagator(y0.basis, g.dt, backend=backend)
    f = _forcing(y0.basis, g, v, source)
    coef = prop.leray(y0.coef, alpha, g.M, forcing=f, closure=closure)
    return Trajectory(g, y0.basis, coef)


def simulate_oseen(y0, h, v, g, source=None, backend="auto"):
    """Oseen trajectory with the drift ``h`` frozen (linear in y0, v, source)."""
    if h is not None and h.time_grid != g:
        raise ValueError("drift and simulation use different time grids")
    drift_basis = None if h is None else h.basis
    prop = Propagator(y0.basis, g.dt, drift_basis=drift_basis, backend=backend)
    f = _forcing(y0.basis, g, v, source)
    drift = None if h is None else h.coef
    if drift is None and f is None:
        f = np.zeros((g.M + 1, y0.basis.size), dtype=complex)
    coef = prop.forward(y0.coef, drift, f)
    return Trajectory(g, y0.basis, coef)


def simulate_adjoint(phi_T, h, g, backend="auto"):
    """Backward adjoint sweep from the terminal datum ``phi_T``."""
    drift_basis = None if h is None else h.basis
    prop = Propagator(phi_T.basis, g.dt, drift_basis=drift_basis, backend=backend)
    coef = prop.backward(phi_T.coef, None if h is None else h.coef, g.M)
    return Trajectory(g, phi_T.basis, coef)


def duhamel_reconstruct(y0, h, v, g, source=None, tol=1e-13, max_sweeps=100):
    """Variation-of-constants solution by exponential trapezoid and Picard sweeps.

    Each sweep evaluates the advection term on the previous iterate over the
    whole horizon; sweeps stop once successive iterates agree to ``tol``.
    """
    basis = y0.basis
    dt = g.dt
    decay = np.exp(-dt * basis.eigenvalues)
    f = _forcing(basis, g, v, source)
    if f is None:
        f = np.zeros((g.M + 1, basis.size), dtype=complex)
    drift = None if h is None or h.is_zero() else h.coef
    prop = Propagator(basis, dt, drift_basis=None if h is None else h.basis)

    def sweep(rhs):
        out = np.empty((g.M + 1, basis.size), dtype=complex)
        out[0] = y0.coef
        y = y0.coef
        for n in range(g.M):
            y = decay * y + 0.5 * dt * (decay * rhs[n] + rhs[n + 1])
            out[n + 1] = y
        return out

    y = sweep(f)
    if drift is None:
        return Trajectory(g, basis, y)
    for _ in range(max_sweeps):
        adv = np.stack([prop.advect(drift[n], y[n]) for n in range(g.M + 1)])
        new = sweep(f - adv)
        change = np.max(np.abs(new - y))
        y = new
        if change <= tol * max(np.max(np.abs(y)), 1e-300):
            return Trajectory(g, basis, y)
        if not np.isfinite(change):
            break
    raise SimulationError(f"Picard iteration did not converge in {max_sweeps} sweeps")


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class EnergyReport:
    residuals: np.ndarray
    dissipation: np.ndarray
    l2_norms: np.ndarray
    v_norms: np.ndarray
    da_norms: np.ndarray
    sup_l2: float
    sup_v: float
    l2_v: float
    forcing_l2: float
    b0: float
    a_priori_ratio: float
    dt_dual_norm: float
    sup_filtered_l2: float


def energy_report(tr, v=None, p=None, source=None):
    """Discrete energy balance of a trajectory.

    r_n = (|y_{n+1}|^2 - |y_n|^2) / (2 dt) + |grad y_{n+1/2}|^2 - (F_{n+1/2}, y_{n+1/2})

    where F is the spectral forcing P(mask v) (+ source).  The a priori
    quantities (||y||_{L2(V)} + ||y||_{C0(H)}) / (||y0|| + ||F||_{L2(L2)}) and
    ||y_t||_{L2(V')} are reported, not checked.
    """
    g, basis = tr.time_grid, tr.basis
    dt = g.dt
    y = tr.coef
    f = _forcing(basis, g, v, source)
    ymid = 0.5 * (y[1:] + y[:-1])
    l2 = tr.norms(0.0)
    grad_mid = sobolev_norms(basis, ymid, 1.0) ** 2
    res = (l2[1:] ** 2 - l2[:-1] ** 2) / (2 * dt) + grad_mid
    c = trapezoid_weights(g)
    forcing_l2 = 0.0
    if f is not None:
        fmid = 0.5 * (f[1:] + f[:-1])
        res = res - np.real(np.sum(np.conj(fmid) * ymid, axis=1))
        forcing_l2 = float(np.sqrt(dt * np.sum(c * np.sum(np.abs(f) ** 2, axis=1))))
    vn = tr.norms(1.0)
    l2_v = float(np.sqrt(dt * np.sum(c * vn**2)))
    b0 = float(l2[0] + forcing_l2)
    ydot = np.diff(y, axis=0) / dt
    alpha = 0.0 if p is None else (p.alpha if isinstance(p, FilterParams) else float(p))
    zl2 = sobolev_norms(basis, filter_coef(basis, y, alpha), 0.0)
    return EnergyReport(
        residuals=res,
        dissipation=np.concatenate([[0.0], np.cumsum(2 * dt * grad_mid)]),
        l2_norms=l2,
        v_norms=vn,
        da_norms=tr.norms(2.0),
        sup_l2=float(l2.max()),
        sup_v=float(vn.max()),
        l2_v=l2_v,
        forcing_l2=forcing_l2,
        b0=b0,
        a_priori_ratio=float((l2_v + l2.max()) / b0) if b0 > 0 else 0.0,
        dt_dual_norm=float(np.sqrt(dt * np.sum(sobolev_norms(basis, ydot, -1.0) ** 2))),
        sup_filtered_l2=float(zl2.max()),
    )


def regularization_times(tr, k, tau, c0=1.0, check=True):
    """Measure of {t in [0, tau] : |grad y(t)|^2 <= (k / tau) |y0|^2}.

    The measure is counted step by step, each sample standing for the interval
    [t_n, t_{n+1}) clipped to [0, tau].  Also returns the first grid time
    t* in (0, T/2) with ||A y(t*)||^2 <= 65 (1 + c0) (k / tau)^3 |y0|^6.
    Raises :class:`PropertyFailure` if the measure falls below tau / k - dt.
    """
    g = tr.time_grid
    if not k > 1.5:
        raise ValueError(f"k must exceed 3/2, got {k}")
    if not 0 < tau <= g.T / 2 * (1 + 1e-12):
        raise ValueError(f"tau must lie in (0, T/2], got {tau}")
    t = g.times
    y0n = float(tr.norms(0.0)[0])
    grad2 = tr.norms(1.0) ** 2
    inside = grad2 <= (k / tau) * y0n**2
    lengths = np.clip(np.minimum(t + g.dt, tau) - t, 0.0, None)
    measure = float(np.sum(lengths[inside]))
    bound = tau / k
    phi = 65.0 * (1.0 + c0) * (k / tau) ** 3 * y0n**6
    da2 = tr.norms(2.0) ** 2
    hits = np.flatnonzero((t > 0) & (t < g.T / 2) & (da2 <= phi))
    first = float(t[hits[0]]) if hits.size else None
    if check and y0n > 0 and measure < bound - g.dt * (1 + 1e-9):
        raise PropertyFailure(
            f"regularization set measure {measure:.6g} below tau/k - dt = {bound - g.dt:.6g}"
        )
    return {"measure": measure, "bound": bound, "first_time": first, "phi": phi}
