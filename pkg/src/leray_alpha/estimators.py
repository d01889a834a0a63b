"""scikit-learn style wrappers.

States are exchanged as real coordinate vectors (``Basis.to_real``), one row
per sample, so the objects compose with sklearn tooling.  The numerical work is
done by the functional API.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .control import HUMConfig
from .dynamics import ControlMask, TimeGrid
from .filtering import filter_coef
from .nonlinear import DEFAULT_THRESHOLD, FixedPointConfig, fixed_point_control, verify_null
from .spectral import SpectralField, build_basis
from .validation import check_nonnegative, check_range, check_real_states

__all__ = ["HelmholtzFilter", "LerayAlphaController"]


class HelmholtzFilter(TransformerMixin, BaseEstimator):
    """Per-mode smoothing by 1 / (1 + alpha^2 |k|^2) on real coordinates."""

    def __init__(self, alpha=0.1, grid_size=8, k_max=1):
        self.alpha = alpha
        self.grid_size = grid_size
        self.k_max = k_max

    def fit(self, X, y=None):
        check_nonnegative(self.alpha, "alpha")
        self.basis_ = build_basis(self.grid_size, self.k_max)
        check_real_states(X, self.basis_.size)
        # coordinate 2j and 2j + 1 belong to the j-th half-plane mode
        lam = np.repeat(self.basis_.eigenvalues[self.basis_.positive], 2)
        self.factors_ = 1.0 / (1.0 + self.alpha**2 * lam)
        self.n_features_in_ = self.basis_.size
        return self

    def transform(self, X):
        check_is_fitted(self, "factors_")
        return check_real_states(X, self.n_features_in_) * self.factors_

    def inverse_transform(self, X):
        check_is_fitted(self, "factors_")
        return check_real_states(X, self.n_features_in_) / self.factors_


class LerayAlphaController(BaseEstimator):
    """Local null control of one initial state.

    ``fit(X)`` takes a single row (real coordinates) and computes the control;
    ``predict(X)`` re-simulates each row with that control and returns the
    terminal states; ``score`` is minus the mean terminal-to-initial norm ratio.
    """

    def __init__(self, alpha=0.0, grid_size=8, k_max=1, T=1.0, M=200, epsilon=1e-5,
                 x_range=(0.0, math.pi), y_range=(0.0, 2 * math.pi), max_iters=30,
                 fp_tol=1e-10, relaxation=1.0, smallness=DEFAULT_THRESHOLD):
        self.alpha = alpha
        self.grid_size = grid_size
        self.k_max = k_max
        self.T = T
        self.M = M
        self.epsilon = epsilon
        self.x_range = x_range
        self.y_range = y_range
        self.max_iters = max_iters
        self.fp_tol = fp_tol
        self.relaxation = relaxation
        self.smallness = smallness

    def _setup(self):
        check_nonnegative(self.alpha, "alpha")
        check_range(self.epsilon, 0.0, 1.0, "epsilon", lo_open=True)
        self.basis_ = build_basis(self.grid_size, self.k_max)
        self.grid_ = TimeGrid(self.T, self.M)
        self.mask_ = ControlMask.rectangle(self.grid_size, self.x_range, self.y_range)
        return FixedPointConfig(max_iters=self.max_iters, fp_tol=self.fp_tol,
                                relaxation=self.relaxation, hum=HUMConfig(epsilon=self.epsilon),
                                smallness=self.smallness)

    def fit(self, X, y=None):
        cfg = self._setup()
        rows = check_real_states(X, self.basis_.size)
        if rows.shape[0] != 1:
            raise ValueError("fit expects exactly one initial state")
        y0 = SpectralField.from_real(self.basis_, rows[0])
        res = fixed_point_control(y0, self.alpha, cfg, self.mask_, self.grid_)
        self.control_ = res.control
        self.trajectory_ = res.trajectory
        self.n_iter_ = res.iters
        self.converged_ = res.converged
        self.history_ = res.history
        self.terminal_norm_ = res.nonlinear_terminal_norm
        self.n_features_in_ = self.basis_.size
        return self

    def predict(self, X):
        check_is_fitted(self, "control_")
        rows = check_real_states(X, self.n_features_in_)
        out = np.empty_like(rows)
        for i, x in enumerate(rows):
            tr = verify_null(SpectralField.from_real(self.basis_, x), self.control_,
                             self.alpha, self.grid_)["trajectory"]
            out[i] = tr.terminal.to_real()
        return out

    def score(self, X, y=None):
        rows = check_real_states(X, self.basis_.size if hasattr(self, "basis_") else np.shape(X)[-1])
        end = self.predict(rows)
        init = np.linalg.norm(rows, axis=1)
        return -float(np.mean(np.linalg.norm(end, axis=1) / np.where(init > 0, init, 1.0)))

    def filtered_trajectory(self):
        check_is_fitted(self, "trajectory_")
        return filter_coef(self.basis_, self.trajectory_.coef, self.alpha)
