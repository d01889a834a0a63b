"""alpha-sweeps on the small testbed and the acceptance-suite entry point."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlMask, SimulationError, TimeGrid
from .nonlinear import FixedPointConfig, fixed_point_control
from .spectral import build_basis

__all__ = [
    "SweepConfig",
    "SweepReport",
    "SweepRow",
    "Testbed",
    "acceptance_suite",
    "alpha_sweep",
    "testbed",
    "uniformity_check",
]


@dataclass(frozen=True)
class Testbed:
    basis: object
    grid: TimeGrid
    mask: ControlMask


def testbed(grid_size=8, k_max=1, T=1.0, M=200, x_range=(0.0, math.pi), y_range=(0.0, 2 * math.pi)):
    """The 8-mode system (all |k_i| <= 1) controlled from the strip x < pi."""
    basis = build_basis(grid_size, k_max)
    return Testbed(basis, TimeGrid(T, M), ControlMask.rectangle(grid_size, x_range, y_range))


@dataclass(frozen=True)
class SweepConfig:
    y0: object
    mask: ControlMask
    grid: TimeGrid
    fixed_point: FixedPointConfig = FixedPointConfig()
    backend: str = "auto"
    workers: int | None = None


@dataclass
class SweepRow:
    alpha: float
    control_linf_l2: float
    terminal_norm: float
    iters: int
    converged: bool
    l2Q_dist_y: float = math.nan
    l2Q_dist_z: float = math.nan
    l2Q_dist_zy: float = math.nan
    zy_bound: float = math.nan
    control_gap: np.ndarray = field(default=None, repr=False)
    result: object = field(default=None, repr=False)

    CSV_COLUMNS = ("alpha", "control_linf_l2", "terminal_norm", "iters", "converged",
                   "l2Q_dist_y", "l2Q_dist_z")

    def csv_values(self):
        return [self.alpha, self.control_linf_l2, self.terminal_norm, self.iters,
                int(self.converged), self.l2Q_dist_y, self.l2Q_dist_z]


@dataclass
class SweepReport:
    alphas: list
    rows: list
    limit_alpha: float = 0.0

    def row(self, alpha):
        for r in self.rows:
            if r.alpha == alpha:
                return r
        raise KeyError(alpha)

    @property
    def converged_rows(self):
        return [r for r in self.rows if r.converged]

    def distances_decreasing(self):
        """Positive-alpha distances in sweep order and their successive ratios."""
        rows = [r for r in self.converged_rows if r.alpha > 0]
        d = np.array([r.l2Q_dist_y for r in rows])
        ratios = d[:-1] / d[1:] if d.size > 1 else np.array([])
        return d, ratios

    def records(self):
        return [dict(zip(SweepRow.CSV_COLUMNS, r.csv_values())) for r in self.rows]


def _run(cfg, alpha):
    try:
        return fixed_point_control(cfg.y0, alpha, cfg.fixed_point, cfg.mask, cfg.grid,
                                   backend=cfg.backend)
    except SimulationError:
        return None


def alpha_sweep(base_config, alphas):
    """Run fixed_point_control for each alpha and compare with the alpha = 0 run.

    Rows come back sorted by decreasing alpha (the limit run last).  Distances
    are L2(Q) norms by trapezoidal quadrature: y_alpha - y_0, z_alpha - y_0 and
    z_alpha - y_alpha, the latter next to the filter bound
    alpha^2 sup_t ||y_alpha||_V sqrt(T) max|k|.  Non-converged members are kept
    with ``converged=False``.
    """
    alphas = sorted({float(a) for a in alphas}, reverse=True)
    if 0.0 not in alphas:
        raise ValueError("alpha_sweep needs the limit alpha = 0 among the alphas")
    if any(a < 0 for a in alphas):
        raise ValueError("alphas must be nonnegative")
    cfg = base_config
    workers = cfg.workers or min(len(alphas), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(lambda a: _run(cfg, a), alphas))

    limit = results[-1]
    basis = cfg.y0.basis
    g = cfg.grid
    c_basis = basis.max_sqrt_eigenvalue
    rows = []
    for a, res in zip(alphas, results):
        if res is None:
            rows.append(SweepRow(a, math.nan, math.nan, 0, False))
            continue
        ok = res.converged and limit is not None and limit.converged
        row = SweepRow(
            alpha=a,
            control_linf_l2=res.control.linf_l2(),
            terminal_norm=res.nonlinear_terminal_norm,
            iters=res.iters,
            converged=res.converged,
            result=res,
        )
        y = res.trajectory
        z = y.filtered(a)
        row.l2Q_dist_zy = z.l2q_distance(y)
        row.zy_bound = a * a * float(np.max(y.norms(1.0))) * math.sqrt(g.T) * c_basis
        if ok:
            y0 = limit.trajectory
            row.l2Q_dist_y = y.l2q_distance(y0)
            row.l2Q_dist_z = z.l2q_distance(y0)
            diff = res.control.values - limit.control.values
            row.control_gap = np.sqrt(np.mean(np.sum(diff**2, axis=-1), axis=(1, 2)))
        rows.append(row)
    return SweepReport(alphas=alphas, rows=rows)


def uniformity_check(report, limit=1.5):
    """max / min of the converged ||v_alpha||_{Linf(L2(omega))}; 1 when all vanish."""
    rows = report.converged_rows
    if len(rows) < 2:
        raise ValueError("uniformity_check needs at least two converged rows")
    vals = np.array([r.control_linf_l2 for r in rows])
    if np.all(vals == 0):
        ratio = 1.0
    elif np.any(vals == 0):
        ratio = math.inf
    else:
        ratio = float(vals.max() / vals.min())
    return {"max_over_min": ratio, "pass": bool(ratio <= limit)}


def acceptance_suite(config=None, tags=None):
    """Evaluate the acceptance criteria; returns one record per criterion."""
    from .acceptance import run_suite

    return run_suite(config, tags)
