"""Penalized HUM null control of the Oseen system with a frozen drift.

The control minimizes

    J_eps(v) = 1/2 sum_n c_n dt w_v(t_n)^2 ||v_n||^2_{L2(omega)} + 1/(2 eps) ||y(T)||^2

(trapezoid weights c_n).  Its optimality system is v_n = -w_v(t_n)^-2 mask phi_n
with phi the adjoint state from phi(T) = y(T) / eps, i.e.

    (Lambda + eps I) phi_T = y_free(T),

Lambda being the weighted controllability Gramian.  ``hum_solve`` runs
conjugate gradients on phi_T in the Lambda inner product, which makes J_eps
decrease monotonically along the iterates; ``gramian_control`` assembles
Lambda densely from forward one-step matrices and solves directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    DENSE_LIMIT,
    ControlSignal,
    Propagator,
    PropertyFailure,
    Trajectory,
    trapezoid_weights,
)
from .spectral import ConfigurationError, SpectralField, analyze, synthesize

__all__ = [
    "HUMConfig",
    "HUMResult",
    "WeightProfile",
    "WeightSpec",
    "assemble_gramian",
    "carleman_weight",
    "control_bound_report",
    "gramian_control",
    "hum_solve",
    "make_weights",
]

WEIGHT_CAP = 1e12


@dataclass(frozen=True)
class WeightSpec:
    """``uniform`` or ``carleman_time`` with w(t) = exp(s / (t (T - t))^m)."""

    kind: str = "uniform"
    s: float = 1.0
    m: int = 1

    def __post_init__(self):
        if self.kind not in ("uniform", "carleman_time"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "carleman_time":
            if not self.s > 0:
                raise ValueError(f"carleman_time needs s > 0, got {self.s}")
            if self.m not in (1, 2):
                raise ValueError(f"carleman_time needs m in {{1, 2}}, got {self.m}")


@dataclass(frozen=True, eq=False)
class WeightProfile:
    time_grid: object
    w_y: np.ndarray = field(repr=False)
    w_v: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("w_y", "w_v"):
            w = np.asarray(getattr(self, name), dtype=float)
            if w.shape != (self.time_grid.M + 1,) or not np.all(np.isfinite(w)):
                raise ValueError(f"{name} must hold M + 1 finite samples")
            w.setflags(write=False)
            object.__setattr__(self, name, w)
        if np.any(self.w_y < 0) or np.any(self.w_v <= 0):
            raise ValueError("weights must satisfy w_y >= 0 and w_v > 0")

    @property
    def control_factor(self):
        """w_v^-2, the factor in v = -w_v^-2 mask phi."""
        return self.w_v**-2.0


def carleman_weight(t, T, s, m, cap=WEIGHT_CAP):
    """min(exp(s / (t (T - t))^m), cap); equal to ``cap`` at the endpoints."""
    t = np.asarray(t, dtype=float)
    prod = t * (T - t)
    with np.errstate(divide="ignore", over="ignore"):
        expo = np.where(prod > 0, s / np.where(prod > 0, prod, 1.0) ** m, np.inf)
        return np.minimum(np.exp(np.minimum(expo, math.log(cap) + 1.0)), cap)


def make_weights(spec, g):
    """Sample a weight family on the time grid.

    ``w_y`` follows the same profile as ``w_v`` and is carried for reporting;
    the penalized cost only involves ``w_v``.
    """
    if isinstance(spec, str):
        spec = WeightSpec(spec)
    if spec.kind == "uniform":
        ones = np.ones(g.M + 1)
        return WeightProfile(g, ones, ones)
    w = carleman_weight(g.times, g.T, spec.s, spec.m)
    return WeightProfile(g, w, w)


@dataclass(frozen=True)
class HUMConfig:
    epsilon: float = 1e-5
    cg_tol: float = 1e-10
    cg_max: int = 500
    weights: WeightSpec = WeightSpec()
    method: str = "cg"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not 1e-14 <= self.cg_tol <= 1e-2:
            raise ValueError(f"cg_tol must lie in [1e-14, 1e-2], got {self.cg_tol}")
        if self.cg_max < 1:
            raise ValueError("cg_max must be positive")
        if self.method not in ("cg", "gramian"):
            raise ValueError(f"unknown HUM method {self.method!r}")


@dataclass
class HUMResult:
    control: ControlSignal
    terminal_norm: float
    cg_iters: int
    cost: float
    converged: bool
    phi_T: SpectralField
    trajectory: Trajectory
    adjoint: Trajectory
    history: list = field(default_factory=list)

    @property
    def v(self):
        return self.control

    def record(self):
        return {
            "epsilon": None,
            "cg_iters": self.cg_iters,
            "terminal_norm": self.terminal_norm,
            "cost": self.cost,
            "converged": self.converged,
        }


def _rdot(a, b):
    return float(np.real(np.vdot(a, b)))


class _ControlOperators:
    """B B^T = P(mask^2 .) and the sweeps shared by the HUM solvers."""

    def __init__(self, basis, h, mask, g, weights, backend="auto"):
        if mask.grid_size != basis.grid_size:
            raise ValueError("mask and basis use different grids")
        if h is not None and h.time_grid != g:
            raise ValueError("drift and control problem use different time grids")
        self.basis = basis
        self.mask = mask
        self.g = g
        self.drift = None if h is None or h.is_zero() else h.coef
        self.prop = Propagator(basis, g.dt, drift_basis=None if h is None else h.basis, backend=backend)
        self.factor = weights.control_factor
        self.c = trapezoid_weights(g)
        m2 = mask.values**2
        if basis.size <= DENSE_LIMIT:
            n = basis.grid_size
            fhat = np.fft.fft2(m2) / (n * n)
            dk = basis.modes[:, None, :] - basis.modes[None, :, :]
            gram = basis.directions @ basis.directions.T
            self._k2 = gram * fhat[dk[..., 0] % n, dk[..., 1] % n]
        else:
            self._k2 = None
        self._m2 = m2

    def mask_gram(self, phi):
        if self._k2 is not None:
            return phi @ self._k2.T
        return analyze(self.basis, self._m2 * synthesize(self.basis, phi))

    def adjoint(self, phi_T):
        return self.prop.backward(phi_T, self.drift, self.g.M)

    def forcing_from_adjoint(self, phi):
        return -self.factor[:, None] * self.mask_gram(phi)

    def apply_gramian(self, p):
        """Lambda p = -y(T) for the zero-datum state driven by v = -w^-2 mask phi."""
        phi = self.adjoint(p)
        f = self.forcing_from_adjoint(phi)
        return -self.forward(np.zeros(self.basis.size, dtype=complex), f)[-1]

    def forward(self, y0, forcing):
        return self.prop.forward(y0, self.drift, forcing)

    def control_signal(self, phi):
        grid = synthesize(self.basis, phi) * self.mask.values
        grid *= -self.factor[:, None, None, None]
        return ControlSignal.from_grid_array(self.g, grid, self.mask)


def _source_array(source, g, basis):
    if source is None:
        return None
    s = source.coef if isinstance(source, Trajectory) else np.asarray(source, dtype=complex)
    if s.shape != (g.M + 1, basis.size):
        raise ValueError("source must be sampled on the time grid and basis")
    return s


def _free_terminal(ops, y0, source):
    f = source if source is not None else np.zeros((ops.g.M + 1, ops.basis.size), dtype=complex)
    return ops.forward(y0.coef, f)[-1]


def _finish(ops, y0, phi_T, source, weights, epsilon, cg_iters, converged, history):
    g = ops.g
    phi = ops.adjoint(phi_T)
    control = ops.control_signal(phi)
    f = control.forcing(ops.basis)
    if source is not None:
        f = f + source
    states = ops.forward(y0.coef, f)
    terminal = float(np.linalg.norm(states[-1]))
    l2 = control.l2_norms()
    cost = 0.5 * g.dt * float(np.sum(ops.c * weights.w_v**2 * l2**2)) + terminal**2 / (2 * epsilon)
    return HUMResult(
        control=control,
        terminal_norm=terminal,
        cg_iters=cg_iters,
        cost=cost,
        converged=converged,
        phi_T=SpectralField(ops.basis, phi_T),
        trajectory=Trajectory(g, ops.basis, states),
        adjoint=Trajectory(g, ops.basis, phi),
        history=history,
    )


def hum_solve(y0, h, cfg, mask, g, source=None, backend="auto"):
    """Penalized null control by conjugate gradients on the terminal adjoint datum.

    Parameters
    ----------
    y0 : SpectralField
    h : OseenDrift or None
        Frozen drift; ``None`` gives the Stokes system.
    cfg : HUMConfig
    mask : ControlMask
    g : TimeGrid
    source : Trajectory or array (M + 1, m), optional
        Extra known forcing, included in the free evolution.

    Returns
    -------
    HUMResult
        ``history`` holds the cost, terminal norm and relative residual of
        every CG iterate.  If ``cfg.cg_max`` iterations do not reach
        ``cfg.cg_tol`` the last iterate is returned with ``converged=False``;
        since the cost decreases monotonically it is also the best one.
    """
    if cfg.method == "gramian":
        return gramian_control(y0, h, cfg.epsilon, mask, g, weights=cfg.weights,
                               source=source, backend=backend, full_result=True)
    weights = make_weights(cfg.weights, g)
    ops = _ControlOperators(y0.basis, h, mask, g, weights, backend)
    src = _source_array(source, g, y0.basis)
    eps = cfg.epsilon
    b = _free_terminal(ops, y0, src)
    m = y0.basis.size
    x = np.zeros(m, dtype=complex)
    history = []
    bb = _rdot(b, b)
    if bb == 0.0:
        return _finish(ops, y0, x, src, weights, eps, 0, True, history)

    lam_x = np.zeros(m, dtype=complex)
    r = b.copy()
    lam_r = ops.apply_gramian(r)
    p, lam_p = r.copy(), lam_r.copy()
    rho = _rdot(r, lam_r)
    rho0 = rho
    cost_prev = bb / (2 * eps)
    history.append({"iter": 0, "cost": cost_prev, "terminal_norm": math.sqrt(bb), "residual": 1.0})
    converged = False
    iters = 0
    for iters in range(1, cfg.cg_max + 1):
        if rho <= 0.0:
            converged = True
            iters -= 1
            break
        a_p = lam_p + eps * p
        alpha = rho / _rdot(lam_p, a_p)
        x = x + alpha * p
        lam_x = lam_x + alpha * lam_p
        r = r - alpha * a_p
        yT = b - lam_x
        cost = 0.5 * _rdot(x, lam_x) + _rdot(yT, yT) / (2 * eps)
        lam_r = ops.apply_gramian(r)
        rho_new = _rdot(r, lam_r)
        resid = math.sqrt(max(rho_new, 0.0) / rho0)
        history.append({"iter": iters, "cost": cost, "terminal_norm": math.sqrt(_rdot(yT, yT)),
                        "residual": resid})
        if cost > cost_prev + 1e-9 * history[0]["cost"]:
            raise PropertyFailure(f"HUM cost increased at CG iteration {iters}")
        cost_prev = cost
        if resid <= cfg.cg_tol:
            converged = True
            break
        beta = rho_new / rho
        rho = rho_new
        p = r + beta * p
        lam_p = lam_r + beta * lam_p
    x = 0.5 * (x + np.conj(x[y0.basis.partner]))
    return _finish(ops, y0, x, src, weights, eps, iters, converged, history)


def assemble_gramian(basis, h, mask, g, weights=None, backend="auto"):
    """Dense weighted Gramian in real coordinates from forward step matrices.

    Returns ``(gram, propagators)`` where ``propagators[n]`` maps the real state
    at t_n to the real state at T (zero forcing).
    """
    if basis.size > DENSE_LIMIT:
        raise ConfigurationError(f"dense Gramian limited to {DENSE_LIMIT} modes, basis has {basis.size}")
    weights = make_weights(WeightSpec() if weights is None else weights, g) \
        if not isinstance(weights, WeightProfile) else weights
    prop = Propagator(basis, g.dt, drift_basis=None if h is None else h.basis, backend=backend)
    drift = None if h is None or h.is_zero() else h.coef
    m = basis.size
    eye_c = basis.from_real(np.eye(m))
    m2 = mask.values**2
    kr = basis.to_real(analyze(basis, m2 * synthesize(basis, eye_c))).T
    c = trapezoid_weights(g)
    factor = weights.control_factor
    phis = np.empty((g.M + 1, m, m))
    phis[g.M] = np.eye(m)
    gram = c[g.M] * g.dt * factor[g.M] * kr
    for n in range(g.M - 1, -1, -1):
        hm = None if drift is None else 0.5 * (drift[n] + drift[n + 1])
        step = prop.step_matrix(hm)
        phis[n] = phis[n + 1] @ step
        gram = gram + c[n] * g.dt * factor[n] * (phis[n] @ kr @ phis[n].T)
    asym = np.abs(gram - gram.T).max()
    if asym > 1e-10:
        raise PropertyFailure(f"Gramian asymmetry {asym:.3e} exceeds 1e-10")
    gram = 0.5 * (gram + gram.T)
    low = np.linalg.eigvalsh(gram).min()
    if low < -1e-12:
        raise PropertyFailure(f"Gramian has negative eigenvalue {low:.3e}")
    return gram, phis


def gramian_control(y0, h, epsilon, mask, g, weights=None, source=None, backend="auto",
                    full_result=False):
    """Dense oracle for the penalized problem: solve (Lambda + eps I) phi_T = y_free(T)."""
    basis = y0.basis
    spec = WeightSpec() if weights is None else weights
    profile = spec if isinstance(spec, WeightProfile) else make_weights(spec, g)
    gram, phis = assemble_gramian(basis, h, mask, g, profile, backend)
    prop = Propagator(basis, g.dt, drift_basis=None if h is None else h.basis, backend=backend)
    drift = None if h is None or h.is_zero() else h.coef
    src = _source_array(source, g, basis)
    f = src if src is not None else np.zeros((g.M + 1, basis.size), dtype=complex)
    b = basis.to_real(prop.forward(y0.coef, drift, f)[-1])
    x = np.linalg.solve(gram + epsilon * np.eye(basis.size), b)
    phi = basis.from_real(np.einsum("nji,j->ni", phis, x))
    grid = synthesize(basis, phi) * mask.values
    grid *= -profile.control_factor[:, None, None, None]
    control = ControlSignal.from_grid_array(g, grid, mask)
    if not full_result:
        return control
    ops = _ControlOperators(basis, h, mask, g, profile, backend)
    res = _finish(ops, y0, basis.from_real(x), src, profile, epsilon, 0, True, [])
    res.control = control
    return res


def control_bound_report(v, h, y0):
    """Fit K in ||v||_{Linf(L2(omega))} <= exp(K (1 + ||h||_inf^2)) ||y0||."""
    y0n = y0.norm()
    if not y0n > 0:
        raise ValueError("control_bound_report needs a nonzero initial state")
    linf = v.linf_l2()
    sup = 0.0 if h is None else h.sup_norm()
    if linf == 0.0:
        fitted = -math.inf
    else:
        fitted = math.log(linf / y0n) / (1.0 + sup**2)
    return {
        "linf_l2_norm": linf,
        "l2_l2_norm": v.l2_l2(),
        "drift_sup": sup,
        "fitted_K": fitted,
        "fitted_K_label": "unbounded-below" if fitted == -math.inf else f"{fitted:.17g}",
    }
