"""Experiment configuration: aggregate dataclass plus INI-style file format.

The config file uses configparser syntax with one section per component:

    [scenario]   c, d_over_lambda, sigma_r, sigma_eta, dt
    [ml]         y_min, max_iterations, gradient_tolerance, step_tolerance,
                 grid_fallback, x_bounds, y_bounds
    [tracker]    dt, q_diag, q_mode, p0_diag, gate_radius, reset_enabled,
                 reset_timeout, area_bounds, area_margin
    [trajectory] area, duration, dt, speed_min, speed_max, period_choices,
                 waypoint_step, turn_std
    [grid]       nx, ny, x_bounds, y_bounds, samples_per_point
    [fusion]     kinds, estimator, covariance, fixed_sigma_x2,
                 fixed_sigma_y2, calibration_file
    [run]        master_seed, output_dir

Tuples are comma-separated numbers, rectangles are "x_min, x_max, y_min,
y_max", and measurement kinds are comma-separated names (range, naf_tx,
naf_rx).  Omitted keys keep their defaults; unknown sections or keys are
rejected with a diagnostic naming them.  Runtime-only fields (the ML warm
start, the trajectory seed) are not part of the file format.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .evaluation import GridSpec
from .geometry import ALL_KINDS, MeasurementKind, Rect, ScenarioConfig
from .mlpos import FixedCovariance, MlConfig
from .tracker import TrackerConfig
from .trajectory import TrajectoryConfig

ENV_OUTPUT_DIR = "BISTRACK_OUTPUT_DIR"

ESTIMATORS = ("geo", "ml")
COVARIANCE_MODES = ("taylor", "hessian", "fixed")


@dataclass(frozen=True)
class FusionConfig:
    """Which measurements feed which estimator, and how covariance is built.

    The fixed covariance (for ``covariance = "fixed"``) comes either from the
    inline ``fixed_sigma_x2`` / ``fixed_sigma_y2`` pair or from a calibration
    JSON file written by the ``calibrate`` command.
    """

    kinds: tuple[MeasurementKind, ...] = ALL_KINDS
    estimator: str = "ml"
    covariance: str = "hessian"
    fixed_sigma_x2: float | None = None
    fixed_sigma_y2: float | None = None
    calibration_file: str | None = None

    def __post_init__(self):
        kinds = tuple(self.kinds)
        if len(set(kinds)) != len(kinds):
            raise ConfigError(f"fusion.kinds has duplicates: {kinds}")
        object.__setattr__(
            self, "kinds", tuple(sorted(kinds, key=lambda k: k.order)))
        if self.estimator not in ESTIMATORS:
            raise ConfigError(
                f"fusion.estimator must be one of {ESTIMATORS}, "
                f"got {self.estimator!r}")
        if self.covariance not in COVARIANCE_MODES:
            raise ConfigError(
                f"fusion.covariance must be one of {COVARIANCE_MODES}, "
                f"got {self.covariance!r}")
        if self.estimator == "geo" and len(self.kinds) != 2:
            raise ConfigError(
                f"fusion.estimator 'geo' needs exactly 2 kinds, "
                f"got {len(self.kinds)}")
        if self.estimator == "ml" and len(self.kinds) < 2:
            raise ConfigError(
                f"fusion.estimator 'ml' needs at least 2 kinds, "
                f"got {len(self.kinds)}")
        if self.covariance == "taylor" and self.estimator != "geo":
            raise ConfigError(
                "fusion.covariance 'taylor' requires estimator 'geo'")
        if (self.fixed_sigma_x2 is None) != (self.fixed_sigma_y2 is None):
            raise ConfigError(
                "fusion.fixed_sigma_x2 and fixed_sigma_y2 must be set together")
        if self.covariance == "fixed" and self.fixed_sigma_x2 is None \
                and self.calibration_file is None:
            raise ConfigError(
                "fusion.covariance 'fixed' needs fixed_sigma_x2/fixed_sigma_y2 "
                "or calibration_file")

    def resolve_fixed(self) -> FixedCovariance | None:
        """Materialize the fixed covariance, reading the calibration file
        if one is referenced.  Returns None when no source is configured."""
        if self.fixed_sigma_x2 is not None:
            return FixedCovariance(self.fixed_sigma_x2, self.fixed_sigma_y2)
        if self.calibration_file is None:
            return None
        try:
            with open(self.calibration_file) as fh:
                payload = json.load(fh)
            return FixedCovariance(float(payload["sigma_x2"]),
                                   float(payload["sigma_y2"]))
        except FileNotFoundError:
            raise ConfigError(
                f"fusion.calibration_file not found: {self.calibration_file}")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(
                f"bad calibration file {self.calibration_file}: {exc}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one reproducible run needs."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    ml: MlConfig = field(default_factory=MlConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    master_seed: int = 0
    output_dir: str = "out"


def benchmark_preset() -> ExperimentConfig:
    """Settings used by the headline evaluation campaigns.

    Narrow array spacing d/lambda = 0.315, so that the NAF noise std of
    0.022 corresponds to roughly 4 degrees of bearing noise at boresight,
    and the dt-scaled process-noise model for the tracker.
    """
    return ExperimentConfig(scenario=ScenarioConfig(d_over_lambda=0.315),
                            tracker=TrackerConfig(q_mode="accel"))


# ---------------------------------------------------------------------------
# String (de)serialization per field
# ---------------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str, n: int | None) -> tuple[float, ...]:
    vals = tuple(float(tok) for tok in s.split(","))
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated values, got {len(vals)}")
    return vals


def _fmt_floats(vals) -> str:
    return ", ".join(repr(float(v)) for v in vals)


def _parse_rect(s: str) -> Rect:
    return Rect(*_parse_floats(s, 4))


def _fmt_rect(r: Rect) -> str:
    return _fmt_floats((r.x_min, r.x_max, r.y_min, r.y_max))


def _parse_kinds(s: str) -> tuple[MeasurementKind, ...]:
    out = []
    for tok in s.split(","):
        try:
            out.append(MeasurementKind(tok.strip().lower()))
        except ValueError:
            valid = ", ".join(k.value for k in MeasurementKind)
            raise ValueError(f"unknown measurement kind {tok.strip()!r} "
                             f"(valid: {valid})")
    return tuple(out)


def _fmt_kinds(kinds) -> str:
    return ", ".join(k.value for k in kinds)


def _choice(*options: str):
    def parse(s: str) -> str:
        val = s.strip()
        if val not in options:
            raise ValueError(f"must be one of {options}, got {val!r}")
        return val
    return parse


_FLOAT = (float, lambda v: repr(float(v)))
_INT = (int, repr)
_BOOL = (_parse_bool, lambda v: "true" if v else "false")
_STR = (lambda s: s.strip(), str)
_PAIR = (lambda s: _parse_floats(s, 2), _fmt_floats)
_QUAD = (lambda s: _parse_floats(s, 4), _fmt_floats)
_TUPLE = (lambda s: _parse_floats(s, None), _fmt_floats)
_RECT = (_parse_rect, _fmt_rect)
_KINDS = (_parse_kinds, _fmt_kinds)
_OPT_FLOAT = (float, lambda v: repr(float(v)))   # None handled by omission

# section -> (constructor, {key: (parse, fmt)})
_SCHEMA = {
    "scenario": (ScenarioConfig, {
        "c": _FLOAT, "d_over_lambda": _FLOAT, "sigma_r": _FLOAT,
        "sigma_eta": _FLOAT, "dt": _FLOAT,
    }),
    "ml": (MlConfig, {
        "y_min": _FLOAT, "max_iterations": _INT,
        "gradient_tolerance": _FLOAT, "step_tolerance": _FLOAT,
        "grid_fallback": _BOOL, "x_bounds": _PAIR, "y_bounds": _PAIR,
    }),
    "tracker": (TrackerConfig, {
        "dt": _FLOAT, "q_diag": _QUAD,
        "q_mode": (_choice("diagonal", "accel"), str),
        "p0_diag": _QUAD, "gate_radius": _FLOAT, "reset_enabled": _BOOL,
        "reset_timeout": _FLOAT, "area_bounds": _RECT, "area_margin": _FLOAT,
    }),
    "trajectory": (TrajectoryConfig, {
        "area": _RECT, "duration": _FLOAT, "dt": _FLOAT,
        "speed_min": _FLOAT, "speed_max": _FLOAT, "period_choices": _TUPLE,
        "waypoint_step": _FLOAT, "turn_std": _FLOAT,
    }),
    "grid": (GridSpec, {
        "nx": _INT, "ny": _INT, "x_bounds": _PAIR, "y_bounds": _PAIR,
        "samples_per_point": _INT,
    }),
    "fusion": (FusionConfig, {
        "kinds": _KINDS,
        "estimator": (_choice(*ESTIMATORS), str),
        "covariance": (_choice(*COVARIANCE_MODES), str),
        "fixed_sigma_x2": _OPT_FLOAT, "fixed_sigma_y2": _OPT_FLOAT,
        "calibration_file": _STR,
    }),
    "run": (None, {
        "master_seed": _INT, "output_dir": _STR,
    }),
}


def _to_strings(cfg: ExperimentConfig) -> dict[str, dict[str, str]]:
    """Serialized key/value view of a config, omitting unset optionals."""
    out: dict[str, dict[str, str]] = {}
    for section, (_, keys) in _SCHEMA.items():
        holder = cfg if section == "run" else getattr(cfg, section)
        vals = {}
        for key, (_, fmt) in keys.items():
            raw = getattr(holder, key)
            if raw is None:
                continue
            vals[key] = fmt(raw)
        out[section] = vals
    return out


def _from_strings(strings: dict[str, dict[str, str]]) -> ExperimentConfig:
    parts = {}
    run: dict = {}
    for section, vals in strings.items():
        ctor, keys = _SCHEMA[section]
        kwargs = {}
        for key, text in vals.items():
            parse = keys[key][0]
            try:
                kwargs[key] = parse(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}")
        if section == "run":
            run = kwargs
        else:
            try:
                parts[section] = ctor(**kwargs)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"[{section}] {exc}")
    return ExperimentConfig(**parts, **run)


def parse_config(text: str,
                 base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse config text, overlaying it on ``base`` (or the defaults).

    Unknown sections or keys raise ConfigError naming the offender, as do
    malformed values and invariant violations.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}")
    if parser.defaults():
        raise ConfigError("unknown section 'DEFAULT'")

    strings = _to_strings(base if base is not None else ExperimentConfig())
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        known = _SCHEMA[section][1]
        for key, value in parser[section].items():
            if key not in known:
                raise ConfigError(f"unknown key {section}.{key}")
            strings[section][key] = value
    return _from_strings(strings)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Render a config as file text; parse_config(serialize_config(c)) == c."""
    lines = []
    for section, vals in _to_strings(cfg).items():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {text}" for key, text in vals.items())
        lines.append("")
    return "\n".join(lines)


def load_config(path: str,
                base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read and parse a config file.  OSError propagates to the caller (the
    CLI maps it to its IO exit code); malformed content raises ConfigError."""
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base)


def apply_overrides(cfg: ExperimentConfig,
                    pairs: list[str]) -> ExperimentConfig:
    """Apply "section.key=value" overrides (the --set flag)."""
    strings = _to_strings(cfg)
    for pair in pairs:
        name, sep, value = pair.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(
                f"override must look like section.key=value, got {pair!r}")
        key = key.strip()
        if section not in _SCHEMA or key not in _SCHEMA[section][1]:
            raise ConfigError(f"unknown key {section}.{key}")
        strings[section][key] = value.strip()
    return _from_strings(strings)


def default_output_dir() -> str:
    """Built-in default for output_dir, overridable via the environment."""
    return os.environ.get(ENV_OUTPUT_DIR, "out")
