"""Closed-form localization from two measurements plus Taylor covariance.

Two angle measurements intersect two rays; one angle plus bistatic range
intersects a ray with the iso-range ellipse.  Measurement noise is pushed
into a Cartesian 2x2 covariance by first-order Taylor expansion of the
conversion function, with partials taken at the noisy measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindBaselineError,
    DegenerateEllipseError,
    UnresolvableGeometryError,
)
from .geometry import (
    MeasurementKind,
    MeasurementSet,
    Position,
    ScenarioConfig,
    inverse_naf,
)

# Below this |tan(phi_rx) - tan(phi_tx)| the rays are treated as parallel.
PARALLEL_RAY_TOL = 1e-9


@dataclass(frozen=True)
class PositionEstimate:
    """Estimated location with its error covariance and provenance.

    ``cov`` may be None while the covariance has not been attached yet
    (the ML fit returns the position first).
    """

    p_hat: Position
    cov: np.ndarray | None
    method: str
    used_kinds: tuple[MeasurementKind, ...]

    def __post_init__(self):
        if self.cov is None:
            return
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (2, 2):
            raise ValueError(f"covariance must be 2x2, got {cov.shape}")
        scale = max(abs(cov).max(), 1e-300)
        if abs(cov[0, 1] - cov[1, 0]) > 1e-9 * scale:
            raise ValueError("covariance must be symmetric")
        # 2x2 PSD check within relative tolerance, no eigendecomposition
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        if cov[0, 0] < -1e-9 * scale or cov[1, 1] < -1e-9 * scale \
                or det < -1e-9 * scale * scale:
            raise ValueError("covariance must be positive semi-definite")


def locate_from_angles(eta_tx: float, eta_rx: float, cfg: ScenarioConfig,
                       raw: bool = False) -> Position:
    """Intersect the TX and RX angle rays.

    Raises UnresolvableGeometryError for (near-)parallel rays and
    BehindBaselineError when the intersection has y < 0; ``raw=True``
    skips both checks and returns the raw point (useful to reproduce the
    fan-out of near-parallel noisy draws).
    """
    t_tx = math.tan(inverse_naf(eta_tx, cfg))
    t_rx = math.tan(inverse_naf(eta_rx, cfg))
    denom = t_rx - t_tx
    if abs(denom) < PARALLEL_RAY_TOL and not raw:
        raise UnresolvableGeometryError(
            f"unresolvable geometry: |tan spread| = {abs(denom):.3e}")
    if denom == 0.0:
        raise UnresolvableGeometryError("unresolvable geometry: parallel rays")
    px = -cfg.c * (t_rx + t_tx) / denom
    py = 2.0 * cfg.c / denom
    if py < 0 and not raw:
        raise BehindBaselineError(f"estimate behind baseline: y = {py:.3f}")
    return Position(px, py)


def bistatic_to_monostatic_range(phi_prime: float, r_b: float,
                                 cfg: ScenarioConfig) -> float:
    """ULA-centric monostatic range from bistatic range and ray angle.

    ``phi_prime`` is pi + phi_TX for a TX measurement or phi_RX for RX.
    """
    denom = r_b - 2.0 * cfg.c * math.sin(phi_prime)
    if denom <= 0:
        raise DegenerateEllipseError(
            f"degenerate ellipse intersection: denominator = {denom:.3e}")
    r_m = (r_b * r_b - 4.0 * cfg.c * cfg.c) / (2.0 * denom)
    if r_m <= 0:
        raise DegenerateEllipseError(
            f"degenerate ellipse intersection: r_m = {r_m:.3e}")
    return r_m


def locate_from_angle_range(eta: float, r_b: float, side: str,
                            cfg: ScenarioConfig) -> Position:
    """Locate from one NAF angle plus bistatic range.

    ``side`` is "tx" or "rx" and names the array the angle belongs to.
    """
    phi = inverse_naf(eta, cfg)
    if side == "tx":
        phi_prime = math.pi + phi
        shift = -cfg.c
    elif side == "rx":
        phi_prime = phi
        shift = cfg.c
    else:
        raise ValueError(f"side must be 'tx' or 'rx', got {side!r}")
    r_m = bistatic_to_monostatic_range(phi_prime, r_b, cfg)
    return Position(-r_m * math.sin(phi) + shift, r_m * math.cos(phi))


_ANGLES = frozenset({MeasurementKind.NAF_TX, MeasurementKind.NAF_RX})
_TX_RANGE = frozenset({MeasurementKind.BISTATIC_RANGE, MeasurementKind.NAF_TX})
_RX_RANGE = frozenset({MeasurementKind.BISTATIC_RANGE, MeasurementKind.NAF_RX})


def _conversion(kind_set, cfg: ScenarioConfig):
    """Conversion (m1, m2) -> Position for a 2-kind set in canonical order."""
    if kind_set == _ANGLES:
        return lambda m1, m2: locate_from_angles(m1, m2, cfg), "geo-angles"
    if kind_set == _TX_RANGE:
        return lambda m1, m2: locate_from_angle_range(m2, m1, "tx", cfg), \
            "geo-angle-range"
    if kind_set == _RX_RANGE:
        return lambda m1, m2: locate_from_angle_range(m2, m1, "rx", cfg), \
            "geo-angle-range"
    raise ValueError(
        f"geometric positioning needs exactly two distinct kinds, got {kind_set}")


def geo_locate(m_set: MeasurementSet, cfg: ScenarioConfig) -> Position:
    """Dispatch a 2-kind measurement set to the matching conversion."""
    if len(m_set) != 2:
        raise ValueError(
            f"geometric positioning needs exactly 2 measurements, got {len(m_set)}")
    convert, _ = _conversion(m_set.kind_set(), cfg)
    v = m_set.values
    return convert(v[0], v[1])


def taylor_covariance(m_set: MeasurementSet, cfg: ScenarioConfig) -> np.ndarray:
    """First-order propagation of measurement variances into Cartesian space.

    The Jacobian of the conversion function is taken by central finite
    differences at the noisy measurement with per-component step
    h_j = max(1e-6, 1e-6 * |m_j|); conversion failures at the perturbed
    points propagate to the caller.
    """
    if len(m_set) != 2:
        raise ValueError(
            f"Taylor covariance needs exactly 2 measurements, got {len(m_set)}")
    convert, _ = _conversion(m_set.kind_set(), cfg)
    m = m_set.values
    jac = np.empty((2, 2))
    for j in range(2):
        h = max(1e-6, 1e-6 * abs(m[j]))
        lo = m.copy()
        hi = m.copy()
        lo[j] -= h
        hi[j] += h
        p_hi = convert(hi[0], hi[1])
        p_lo = convert(lo[0], lo[1])
        jac[0, j] = (p_hi.px - p_lo.px) / (2.0 * h)
        jac[1, j] = (p_hi.py - p_lo.py) / (2.0 * h)
    cov = (jac * m_set.variances) @ jac.T
    return 0.5 * (cov + cov.T)


def geo_estimate(m_set: MeasurementSet, cfg: ScenarioConfig) -> PositionEstimate:
    """Locate from two measurements and attach the Taylor covariance."""
    _, method = _conversion(m_set.kind_set(), cfg)
    p_hat = geo_locate(m_set, cfg)
    cov = taylor_covariance(m_set, cfg)
    return PositionEstimate(p_hat, cov, method, m_set.kinds)
