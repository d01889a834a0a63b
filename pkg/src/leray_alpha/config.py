"""Run configuration: JSON sections, strict validation, echo and round trip."""

from __future__ import annotations

import difflib
import json
import math
from dataclasses import MISSING, asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .control import HUMConfig, WeightSpec
from .dynamics import ControlMask, TimeGrid
from .nonlinear import DEFAULT_THRESHOLD, FixedPointConfig
from .spectral import ConfigurationError, build_basis, random_field, single_mode, two_mode

__all__ = [
    "ConfigError",
    "ConfigFileMissing",
    "ConfigParseError",
    "RunConfig",
    "build_initial",
    "config_from_dict",
    "dump_config",
    "load_config",
]


class ConfigError(ValueError):
    """Constraint violation; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class ConfigFileMissing(FileNotFoundError):
    pass


class ConfigParseError(ValueError):
    pass


@dataclass(frozen=True)
class GridSection:
    N: int = 8
    k_max: int = 1


@dataclass(frozen=True)
class TimeSection:
    T: float = 1.0
    M: int = 200


@dataclass(frozen=True)
class PhysicsSection:
    alpha: float = 0.0


@dataclass(frozen=True)
class WeightsSection:
    kind: str = "uniform"
    s: float = 1.0
    m: int = 1


@dataclass(frozen=True)
class ControlSection:
    rect: tuple = ((0.0, math.pi), (0.0, 2 * math.pi))
    rolloff: float = 0.0
    epsilon: float = 1e-5
    weights: WeightsSection = WeightsSection()
    cg_tol: float = 1e-10
    cg_max: int = 500
    method: str = "cg"


@dataclass(frozen=True)
class FixedPointSection:
    max_iters: int = 30
    fp_tol: float = 1e-10
    relaxation: float = 1.0
    sigma: float = 0.6
    ball: float = 1.0
    smallness: float = DEFAULT_THRESHOLD


@dataclass(frozen=True)
class InitialCondition:
    generator: str = "two_mode"
    amplitude: float = 0.1
    seed: int = 0
    k: tuple = (1, 0)
    q: tuple = (0, 1)
    k_band: int | None = None
    decay: float = 0.0


@dataclass(frozen=True)
class OutputSection:
    directory: str = "runs/default"
    formats: tuple = ("csv", "binary", "json")


@dataclass(frozen=True)
class SweepSection:
    alphas: tuple = (0.4, 0.2, 0.1, 0.05, 0.0)


@dataclass(frozen=True)
class LargeTimeSection:
    threshold: float = DEFAULT_THRESHOLD
    max_coast: float = 50.0


@dataclass(frozen=True)
class TrackSection:
    target: InitialCondition = InitialCondition(generator="single_mode", amplitude=0.5)
    perturbation: InitialCondition = InitialCondition(generator="single_mode", amplitude=1e-3, k=(0, 1))
    epsilon: float = 1e-6


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = GridSection()
    time: TimeSection = TimeSection()
    physics: PhysicsSection = PhysicsSection()
    control: ControlSection = ControlSection()
    fixed_point: FixedPointSection = FixedPointSection()
    initial_condition: InitialCondition = InitialCondition()
    output: OutputSection = OutputSection()
    sweep: SweepSection = SweepSection()
    largetime: LargeTimeSection = LargeTimeSection()
    track: TrackSection = TrackSection()

    # --- derived objects ------------------------------------------------

    def basis(self):
        return build_basis(self.grid.N, self.grid.k_max)

    def time_grid(self):
        return TimeGrid(self.time.T, self.time.M)

    def mask(self):
        (x0, x1), (y0, y1) = self.control.rect
        return ControlMask.rectangle(self.grid.N, (x0, x1), (y0, y1), self.control.rolloff)

    def hum(self, epsilon=None):
        c = self.control
        w = WeightSpec(c.weights.kind, c.weights.s, c.weights.m)
        return HUMConfig(epsilon=c.epsilon if epsilon is None else epsilon,
                         cg_tol=c.cg_tol, cg_max=c.cg_max, weights=w, method=c.method)

    def fixed_point_config(self, epsilon=None):
        f = self.fixed_point
        return FixedPointConfig(max_iters=f.max_iters, fp_tol=f.fp_tol, relaxation=f.relaxation,
                                hum=self.hum(epsilon), sigma_ball=f.ball, sigma=f.sigma,
                                smallness=f.smallness)

    def initial_state(self, basis=None):
        return build_initial(self.initial_condition, self.basis() if basis is None else basis)

    def to_dict(self):
        return _plain(asdict(self))

    def with_output(self, directory):
        return replace(self, output=replace(self.output, directory=str(directory)))


def build_initial(ic, basis):
    """Initial field from a named generator."""
    if ic.generator == "zero":
        return random_field(basis, 0, 0.0)
    if ic.generator == "single_mode":
        return single_mode(basis, ic.k, ic.amplitude)
    if ic.generator == "two_mode":
        return two_mode(basis, ic.amplitude, ic.k, ic.q)
    return random_field(basis, np.random.default_rng(ic.seed), ic.amplitude,
                        k_band=ic.k_band, decay=ic.decay)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# parsing


_GENERATORS = ("zero", "single_mode", "two_mode", "random_band")


def _coerce(value, default, key):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        if default and isinstance(default[0], tuple):
            return tuple(tuple(_coerce(x, default[0][0], key) for x in _pair(v, key)) for v in value)
        proto = default[0] if default else value[0] if value else 0.0
        if isinstance(proto, int) and not isinstance(proto, bool):
            return tuple(_coerce(v, proto, key) for v in value)
        if isinstance(proto, float):
            return tuple(_coerce(v, 0.0, key) for v in value)
        return tuple(_coerce(v, "", key) for v in value)
    return value


def _pair(v, key):
    if not isinstance(v, list) or len(v) != 2:
        raise ConfigError(key, f"expected a pair [lo, hi], got {v!r}")
    return v


def _section(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix, f"expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            hint = difflib.get_close_matches(key, known, n=1)
            extra = f"; did you mean '{hint[0]}'?" if hint else ""
            where = f"{prefix}.{key}" if prefix else key
            raise ConfigError(where, f"unknown key{extra}")
    kwargs = {}
    for name, f in known.items():
        key = f"{prefix}.{name}" if prefix else name
        default = f.default if f.default is not MISSING else f.default_factory()
        if name not in data:
            continue
        value = data[name]
        if hasattr(default, "__dataclass_fields__"):
            kwargs[name] = _section(type(default), value, key)
        elif default is None or (name == "k_band"):
            if value is not None:
                kwargs[name] = _coerce(value, 0, key)
            else:
                kwargs[name] = None
        else:
            kwargs[name] = _coerce(value, default, key)
    return cls(**kwargs)


def _check_ic(ic, key, k_max):
    if ic.generator not in _GENERATORS:
        hint = difflib.get_close_matches(ic.generator, _GENERATORS, n=1)
        extra = f"; did you mean '{hint[0]}'?" if hint else ""
        raise ConfigError(f"{key}.generator", f"unknown generator {ic.generator!r}{extra}")
    if not ic.amplitude >= 0:
        raise ConfigError(f"{key}.amplitude", "must be >= 0")
    for name in ("k", "q"):
        k = getattr(ic, name)
        if len(k) != 2 or k == (0, 0) or max(abs(k[0]), abs(k[1])) > k_max:
            raise ConfigError(f"{key}.{name}", f"wavevector {list(k)} is not a retained mode")
    if ic.generator == "two_mode" and (tuple(ic.k) == tuple(ic.q) or
                                       tuple(ic.k) == (-ic.q[0], -ic.q[1])):
        raise ConfigError(f"{key}.q", "two_mode needs two distinct mode pairs")
    if ic.k_band is not None and ic.k_band < 1:
        raise ConfigError(f"{key}.k_band", "must be >= 1")
    if ic.decay < 0:
        raise ConfigError(f"{key}.decay", "must be >= 0")


def validate(cfg):
    """Re-check the cross-field constraints of the numerical modules."""
    N, k_max = cfg.grid.N, cfg.grid.k_max
    if N < 8 or N & (N - 1):
        raise ConfigError("grid.N", f"must be a power of two >= 8, got {N}")
    if not 1 <= k_max <= N // 3:
        raise ConfigError("grid.k_max", f"must lie in [1, N/3] = [1, {N // 3}], got {k_max}")
    if not cfg.time.T > 0:
        raise ConfigError("time.T", "must be > 0")
    if cfg.time.M < 2:
        raise ConfigError("time.M", "must be >= 2")
    if cfg.physics.alpha < 0:
        raise ConfigError("physics.alpha", "must be >= 0")
    c = cfg.control
    if len(c.rect) != 2:
        raise ConfigError("control.rect", "expected [[x0, x1], [y0, y1]]")
    for (lo, hi), axis in zip(c.rect, "xy"):
        if not 0 <= lo < hi <= 2 * math.pi + 1e-12:
            raise ConfigError("control.rect", f"{axis}-range must satisfy 0 <= lo < hi <= 2 pi")
    if c.rolloff < 0:
        raise ConfigError("control.rolloff", "must be >= 0")
    try:
        cfg.mask()
    except ValueError as exc:
        raise ConfigError("control.rect", str(exc)) from None
    checks = [
        ("control.epsilon", 0 < c.epsilon <= 1, "must lie in (0, 1]"),
        ("control.cg_tol", 1e-14 <= c.cg_tol <= 1e-2, "must lie in [1e-14, 1e-2]"),
        ("control.cg_max", c.cg_max >= 1, "must be >= 1"),
        ("control.method", c.method in ("cg", "gramian"), "must be 'cg' or 'gramian'"),
        ("control.weights.kind", c.weights.kind in ("uniform", "carleman_time"),
         "must be 'uniform' or 'carleman_time'"),
        ("control.weights.s", c.weights.s > 0, "must be > 0"),
        ("control.weights.m", c.weights.m in (1, 2), "must be 1 or 2"),
        ("fixed_point.max_iters", cfg.fixed_point.max_iters >= 1, "must be >= 1"),
        ("fixed_point.fp_tol", cfg.fixed_point.fp_tol >= 1e-12, "must be >= 1e-12"),
        ("fixed_point.relaxation", 0 < cfg.fixed_point.relaxation <= 1, "must lie in (0, 1]"),
        ("fixed_point.sigma", 0.5 < cfg.fixed_point.sigma < 1, "must lie in (1/2, 1)"),
        ("fixed_point.ball", cfg.fixed_point.ball > 0, "must be > 0"),
        ("fixed_point.smallness", cfg.fixed_point.smallness > 0, "must be > 0"),
        ("sweep.alphas", len(cfg.sweep.alphas) >= 1 and min(cfg.sweep.alphas) >= 0,
         "must be a nonempty list of alphas >= 0"),
        ("sweep.alphas", len(set(cfg.sweep.alphas)) == len(cfg.sweep.alphas), "entries must be distinct"),
        ("largetime.threshold", cfg.largetime.threshold > 0, "must be > 0"),
        ("largetime.threshold", cfg.largetime.threshold <= cfg.fixed_point.smallness,
         "must not exceed fixed_point.smallness"),
        ("largetime.max_coast", cfg.largetime.max_coast > 0, "must be > 0"),
        ("track.epsilon", 0 < cfg.track.epsilon <= 1, "must lie in (0, 1]"),
        ("output.formats", set(cfg.output.formats) <= {"csv", "binary", "json"},
         "allowed formats are csv, binary, json"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(key, msg)
    if c.method == "gramian" and (2 * k_max + 1) ** 2 - 1 > 64:
        raise ConfigError("control.method", "the dense Gramian is limited to 64 modes")
    _check_ic(cfg.initial_condition, "initial_condition", k_max)
    _check_ic(cfg.track.target, "track.target", k_max)
    _check_ic(cfg.track.perturbation, "track.perturbation", k_max)
    try:
        build_basis(N, k_max)
    except ConfigurationError as exc:
        raise ConfigError("grid.k_max", str(exc)) from None
    return cfg


def config_from_dict(data):
    return validate(_section(RunConfig, data, ""))


def load_config(path):
    """Parse and validate a JSON config file.

    Raises ConfigFileMissing, ConfigParseError or ConfigError.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigFileMissing(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigParseError(f"{p}: {exc}") from None
    return config_from_dict(data)


def dump_config(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
