"""Leray-alpha dynamics and local null control on the periodic torus."""

__version__ = "0.1.0"

from .control import HUMConfig, WeightSpec, gramian_control, hum_solve, make_weights
from .dynamics import (
    ControlMask,
    ControlSignal,
    OseenDrift,
    TimeGrid,
    Trajectory,
    duhamel_reconstruct,
    energy_report,
    regularization_times,
    simulate_adjoint,
    simulate_leray,
    simulate_oseen,
)
from .filtering import FilterParams, apply_filter, filter_bounds_report
from .nonlinear import (
    FixedPointConfig,
    control_to_trajectory,
    fixed_point_control,
    large_time_control,
    verify_null,
)
from .spectral import (
    SpectralField,
    build_basis,
    random_field,
    single_mode,
    sobolev_norm,
    to_grid,
    to_spectral,
    two_mode,
)

__all__ = [
    "ControlMask",
    "ControlSignal",
    "FilterParams",
    "FixedPointConfig",
    "HUMConfig",
    "OseenDrift",
    "SpectralField",
    "TimeGrid",
    "Trajectory",
    "WeightSpec",
    "apply_filter",
    "build_basis",
    "control_to_trajectory",
    "duhamel_reconstruct",
    "energy_report",
    "filter_bounds_report",
    "fixed_point_control",
    "gramian_control",
    "hum_solve",
    "large_time_control",
    "make_weights",
    "random_field",
    "regularization_times",
    "simulate_adjoint",
    "simulate_leray",
    "simulate_oseen",
    "single_mode",
    "sobolev_norm",
    "to_grid",
    "to_spectral",
    "two_mode",
    "verify_null",
]
