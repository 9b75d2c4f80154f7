"""Bistatic system geometry: exact forward model and noisy sampling.

The TX and RX uniform linear arrays sit on the x-axis at (-c, 0) and (+c, 0),
both with boresight along +y.  A target at p = (px, py) produces three
measurements:

* bistatic range  r_b = |p - p_TX| + |p - p_RX|            (meters)
* departure angle at TX   phi_TX = -arctan((px + c) / |py|)  (radians)
* arrival angle at RX     phi_RX = -arctan((px - c) / |py|)  (radians)

The arrays measure angles as normalized angular frequencies (NAF)
eta = (d / lambda) * sin(phi), and additive white Gaussian noise acts in
range and NAF space with standard deviations sigma_r and sigma_eta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError

# Variance recorded for an entry sampled with sigma = 0; keeps downstream
# weight matrices invertible while staying numerically negligible.
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class ScenarioConfig:
    """Static system parameters (geometry, noise, update interval)."""

    c: float = 5.0                  # half baseline, TX at (-c,0), RX at (+c,0) [m]
    d_over_lambda: float = 0.5      # ULA element spacing over carrier wavelength
    sigma_r: float = 0.15           # range noise std [m]
    sigma_eta: float = 0.022        # NAF noise std (dimensionless)
    dt: float = 0.01                # update interval [s]

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"c must be > 0, got {self.c}")
        if not self.d_over_lambda > 0:
            raise ConfigError(f"d_over_lambda must be > 0, got {self.d_over_lambda}")
        if self.sigma_r < 0:
            raise ConfigError(f"sigma_r must be >= 0, got {self.sigma_r}")
        if self.sigma_eta < 0:
            raise ConfigError(f"sigma_eta must be >= 0, got {self.sigma_eta}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")

    @property
    def tx_x(self) -> float:
        return -self.c

    @property
    def rx_x(self) -> float:
        return self.c


@dataclass(frozen=True)
class Position:
    """2D Cartesian target location [m]."""

    px: float
    py: float

    def __post_init__(self):
        if not (math.isfinite(self.px) and math.isfinite(self.py)):
            raise ValueError(f"position components must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py])

    def distance_to(self, other: "Position") -> float:
        return math.hypot(self.px - other.px, self.py - other.py)


def _xy(p) -> tuple[float, float]:
    """Accept a Position, a (px, py) pair, or an ndarray."""
    if isinstance(p, Position):
        return p.px, p.py
    px, py = float(p[0]), float(p[1])
    return px, py


class MeasurementKind(Enum):
    """The three bistatic measurement types, in canonical order."""

    BISTATIC_RANGE = "range"
    NAF_TX = "naf_tx"
    NAF_RX = "naf_rx"

    @property
    def order(self) -> int:
        return _KIND_ORDER[self]


_KIND_ORDER = {
    MeasurementKind.BISTATIC_RANGE: 0,
    MeasurementKind.NAF_TX: 1,
    MeasurementKind.NAF_RX: 2,
}

ALL_KINDS = (
    MeasurementKind.BISTATIC_RANGE,
    MeasurementKind.NAF_TX,
    MeasurementKind.NAF_RX,
)


@dataclass(frozen=True)
class MeasurementEntry:
    """One measurement with its variance.

    ``tx_x`` / ``rx_x`` override the array x-positions for this entry and are
    the multistatic extension hook; when None the scenario's TX/RX are used.
    Range entries use both stations, NAF entries only the one they belong to.
    """

    kind: MeasurementKind
    value: float
    variance: float
    tx_x: float | None = None
    rx_x: float | None = None

    @property
    def is_core(self) -> bool:
        return self.tx_x is None and self.rx_x is None


class MeasurementSet:
    """Ordered collection of measurement entries.

    Entries are kept in canonical order (range, NAF_TX, NAF_RX); insertion
    order breaks ties among multistatic entries of the same kind.  A set
    holds at most one core (non-overridden) entry per kind.
    """

    __slots__ = ("entries",)

    def __init__(self, entries):
        entries = [e if isinstance(e, MeasurementEntry) else MeasurementEntry(*e)
                   for e in entries]
        if not entries:
            raise ValueError("measurement set must not be empty")
        for e in entries:
            if not e.variance > 0:
                raise ValueError(f"variance must be > 0, got {e.variance} for {e.kind}")
            if not math.isfinite(e.value):
                raise ValueError(f"non-finite value for {e.kind}")
        core_kinds = [e.kind for e in entries if e.is_core]
        if len(core_kinds) != len(set(core_kinds)):
            raise ValueError("duplicate core entry kind in measurement set")
        self.entries = tuple(sorted(entries, key=lambda e: e.kind.order))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, MeasurementSet) and self.entries == other.entries

    def __repr__(self) -> str:
        parts = ", ".join(f"{e.kind.value}={e.value:.6g}" for e in self.entries)
        return f"MeasurementSet({parts})"

    @property
    def kinds(self) -> tuple[MeasurementKind, ...]:
        return tuple(e.kind for e in self.entries)

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])

    @property
    def variances(self) -> np.ndarray:
        return np.array([e.variance for e in self.entries])

    def kind_set(self) -> frozenset:
        return frozenset(self.kinds)

    def entry(self, kind: MeasurementKind) -> MeasurementEntry:
        for e in self.entries:
            if e.kind is kind:
                return e
        raise KeyError(kind)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, used for areas and bounds."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ConfigError(f"degenerate rectangle {self}")

    def contains(self, px: float, py: float, margin: float = 0.0) -> bool:
        return (self.x_min - margin <= px <= self.x_max + margin
                and self.y_min - margin <= py <= self.y_max + margin)

    def shrunk(self, margin: float) -> "Rect":
        return Rect(self.x_min + margin, self.x_max - margin,
                    self.y_min + margin, self.y_max - margin)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.y_min, self.y_max)


# ---------------------------------------------------------------------------
# Forward model operations
# ---------------------------------------------------------------------------

def bistatic_range(p, cfg: ScenarioConfig) -> float:
    """Sum of TX-to-target and target-to-RX distances [m].  Always >= 2c."""
    px, py = _xy(p)
    return math.hypot(px + cfg.c, py) + math.hypot(px - cfg.c, py)


def aod(p, cfg: ScenarioConfig) -> float:
    """Departure angle at TX [rad], measured from boresight (+y).

    Undefined on the array axis: py = 0 is rejected.  Both half-planes
    alias through |py|, so the sign of py does not matter.
    """
    px, py = _xy(p)
    if py == 0.0:
        raise ValueError("aod undefined for py = 0 (target on array axis)")
    return -math.atan((px + cfg.c) / abs(py))


def aoa(p, cfg: ScenarioConfig) -> float:
    """Arrival angle at RX [rad]; mirror of aod with (px - c)."""
    px, py = _xy(p)
    if py == 0.0:
        raise ValueError("aoa undefined for py = 0 (target on array axis)")
    return -math.atan((px - cfg.c) / abs(py))


def naf(phi: float, cfg: ScenarioConfig) -> float:
    """Normalized angular frequency eta = (d/lambda) * sin(phi)."""
    return cfg.d_over_lambda * math.sin(phi)


def inverse_naf(eta: float, cfg: ScenarioConfig) -> float:
    """Angle [rad] for a NAF value; |eta| beyond d/lambda is clamped.

    Clamping keeps the inversion total for noisy NAF draws that exceed the
    physical range; full grating-lobe wrapping is not modeled.
    """
    k = cfg.d_over_lambda
    eta = min(max(eta, -k), k)
    return math.asin(eta / k)


def _entry_value(px: float, py: float, kind: MeasurementKind,
                 tx_x: float, rx_x: float, k: float) -> float:
    """Noiseless measurement value for one entry; py > 0 assumed."""
    if kind is MeasurementKind.BISTATIC_RANGE:
        return math.hypot(px - tx_x, py) + math.hypot(px - rx_x, py)
    if kind is MeasurementKind.NAF_TX:
        u = px - tx_x
    else:
        u = px - rx_x
    # (d/lambda) * sin(-arctan(u/py)) = -(d/lambda) * u / hypot(u, py)
    return -k * u / math.hypot(u, py)


def predict_measurements(p, entries, cfg: ScenarioConfig) -> np.ndarray:
    """Noiseless values for each entry of a MeasurementSet (in its order)."""
    px, py = _xy(p)
    if not py > 0:
        raise ValueError(f"forward model requires py > 0, got py = {py}")
    out = np.empty(len(entries))
    for i, e in enumerate(entries):
        tx = cfg.tx_x if e.tx_x is None else e.tx_x
        rx = cfg.rx_x if e.rx_x is None else e.rx_x
        out[i] = _entry_value(px, py, e.kind, tx, rx, cfg.d_over_lambda)
    return out


def forward_model(p, kinds, cfg: ScenarioConfig) -> np.ndarray:
    """Stack noiseless measurements for the requested kinds, canonical order.

    This is the conversion f(p) from Cartesian position into measurement
    space that the ML fusion minimizes against.
    """
    px, py = _xy(p)
    if not py > 0:
        raise ValueError(f"forward model requires py > 0, got py = {py}")
    ordered = sorted(kinds, key=lambda kd: kd.order)
    if len(set(ordered)) != len(ordered):
        raise ValueError("duplicate measurement kind")
    return np.array([
        _entry_value(px, py, kd, cfg.tx_x, cfg.rx_x, cfg.d_over_lambda)
        for kd in ordered
    ])


def kind_sigma(kind: MeasurementKind, cfg: ScenarioConfig) -> float:
    if kind is MeasurementKind.BISTATIC_RANGE:
        return cfg.sigma_r
    return cfg.sigma_eta


def sample_noisy(p, kinds, cfg: ScenarioConfig,
                 rng: np.random.Generator) -> MeasurementSet:
    """Draw one noisy MeasurementSet at p.

    Independent zero-mean Gaussian noise is added per entry (sigma_r in
    range space, sigma_eta in NAF space); the recorded variances are the
    configured sigma^2, floored at VARIANCE_FLOOR when sigma = 0.
    """
    clean = forward_model(p, kinds, cfg)
    ordered = sorted(kinds, key=lambda kd: kd.order)
    entries = []
    for value, kd in zip(clean, ordered):
        sigma = kind_sigma(kd, cfg)
        noisy = value + sigma * rng.standard_normal() if sigma > 0 else value
        entries.append(MeasurementEntry(kd, noisy, max(sigma * sigma, VARIANCE_FLOOR)))
    return MeasurementSet(entries)
