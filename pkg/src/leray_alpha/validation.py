"""Input checks shared by the estimator facade."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["check_nonnegative", "check_range", "check_real_states"]


def check_real_states(X, size, name="X"):
    """Return ``X`` as a finite float array of shape (n_samples, size)."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != size:
        raise ValueError(f"{name} must have shape (n_samples, {size}), got {np.shape(X)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_nonnegative(value, name):
    v = float(value)
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    return v


def check_range(value, lo, hi, name, lo_open=False):
    v = float(value)
    ok = (v > lo if lo_open else v >= lo) and v <= hi
    if not ok:
        left = "(" if lo_open else "["
        raise ValueError(f"{name} must lie in {left}{lo}, {hi}], got {value!r}")
    return v
