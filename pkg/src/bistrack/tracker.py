"""Linear Kalman tracking over converted position measurements.

Constant-velocity dynamics on the state [px, py, vx, vy]; the measurement
is a Cartesian position estimate with its own error covariance.  Estimates
far from the last updated state are gated out, and an optional reset policy
re-initializes the filter from ground truth (used for the two-angles
estimator whose estimates occasionally fan out).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import EstimationError, SingularInnovationError
from .geometry import (
    MeasurementSet,
    Position,
    Rect,
    ScenarioConfig,
)
from .geopos import PositionEstimate, geo_locate, taylor_covariance
from .mlpos import (
    FixedCovariance,
    IndefiniteHessianError,
    MlConfig,
    fixed_covariance_matrix,
    hessian_covariance,
    ml_fit,
)

DEFAULT_AREA = Rect(-15.0, 15.0, 5.0, 25.0)

_H = np.array([[1.0, 0.0, 0.0, 0.0],
               [0.0, 1.0, 0.0, 0.0]])
_I4 = np.eye(4)


@dataclass(frozen=True)
class KinematicState:
    """Filter state [px, py, vx, vy] with covariance at time t."""

    theta: np.ndarray
    P: np.ndarray
    t: float

    @property
    def position(self) -> Position:
        return Position(float(self.theta[0]), float(self.theta[1]))

    @property
    def velocity(self) -> np.ndarray:
        return self.theta[2:]


@dataclass(frozen=True)
class TrackerConfig:
    """Filter tuning, gating, and reset policy.

    ``q_mode`` selects how the process noise is built from ``q_diag``:

    * ``"diagonal"`` -- Q = diag(q_diag) used verbatim per step.  Simple, but
      note that at dt = 0.01 a velocity variance of 0.3 per step lets the
      velocity random-walk by ~0.5 m/s every 10 ms, which keeps the posterior
      velocity uncertainty large no matter how good the measurements are.
    * ``"accel"`` -- discretized continuous white-noise acceleration with
      per-axis intensity taken from the velocity slots q_diag[2], q_diag[3]
      (units m^2/s^3).  This is the standard constant-velocity model Q whose
      entries scale with dt, so the per-step noise stays small at high rates.
    """

    dt: float = 0.01
    q_diag: tuple[float, float, float, float] = (0.3, 0.3, 0.3, 0.3)
    q_mode: str = "diagonal"
    p0_diag: tuple[float, float, float, float] = (0.01, 0.01, 0.01, 0.01)
    gate_radius: float = 8.0        # discard estimates further than this [m]
    reset_enabled: bool = False
    reset_timeout: float = 0.5      # reset after this long without an update [s]
    area_bounds: Rect = DEFAULT_AREA
    area_margin: float = 5.0        # "far outside" = beyond bounds + margin [m]

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if any(q < 0 for q in self.q_diag) or any(p < 0 for p in self.p0_diag):
            raise ValueError("noise diagonals must be >= 0")
        if self.q_mode not in ("diagonal", "accel"):
            raise ValueError(f"q_mode must be 'diagonal' or 'accel', "
                             f"got {self.q_mode!r}")
        if not self.gate_radius > 0:
            raise ValueError(f"gate_radius must be > 0, got {self.gate_radius}")
        if not self.reset_timeout > 0:
            raise ValueError(f"reset_timeout must be > 0, got {self.reset_timeout}")

    def transition_matrix(self) -> np.ndarray:
        a = np.eye(4)
        a[0, 2] = self.dt
        a[1, 3] = self.dt
        return a

    def process_noise(self) -> np.ndarray:
        if self.q_mode == "diagonal":
            return np.diag(self.q_diag)
        dt = self.dt
        qx, qy = self.q_diag[2], self.q_diag[3]
        q = np.zeros((4, 4))
        for i, qi in ((0, qx), (1, qy)):
            q[i, i] = qi * dt ** 3 / 3.0
            q[i, i + 2] = q[i + 2, i] = qi * dt ** 2 / 2.0
            q[i + 2, i + 2] = qi * dt
        return q

    def initial_covariance(self) -> np.ndarray:
        return np.diag(self.p0_diag)


@lru_cache(maxsize=8)
def _model_matrices(cfg: TrackerConfig):
    """Shared (A, Q, P0) for a config; treated as read-only."""
    return cfg.transition_matrix(), cfg.process_noise(), cfg.initial_covariance()


def initial_state(theta, t: float, cfg: TrackerConfig) -> KinematicState:
    return KinematicState(np.asarray(theta, dtype=float).copy(),
                          cfg.initial_covariance(), t)


def predict(s: KinematicState, cfg: TrackerConfig) -> KinematicState:
    """Constant-velocity prediction: theta' = A theta, P' = A P A^T + Q."""
    a, q, _ = _model_matrices(cfg)
    theta = a @ s.theta
    p = a @ s.P @ a.T + q
    return KinematicState(theta, p, s.t + cfg.dt)


def update(s: KinematicState, est: PositionEstimate,
           cfg: TrackerConfig) -> KinematicState:
    """Joseph-form measurement update with the estimate's covariance as R."""
    r = np.asarray(est.cov, dtype=float)
    z = est.p_hat.as_array()
    innov = z - s.theta[:2]
    sm = s.P[:2, :2] + r
    det = sm[0, 0] * sm[1, 1] - sm[0, 1] * sm[1, 0]
    if not (math.isfinite(det) and abs(det) > 1e-300):
        raise SingularInnovationError(f"singular-innovation: det(S) = {det:.3e}")
    s_inv = np.array([[sm[1, 1], -sm[0, 1]], [-sm[1, 0], sm[0, 0]]]) / det
    k = s.P[:, :2] @ s_inv
    theta = s.theta + k @ innov
    ikh = _I4 - k @ _H
    p = ikh @ s.P @ ikh.T + k @ r @ k.T
    p = 0.5 * (p + p.T)
    return KinematicState(theta, p, s.t)


def gate(s: KinematicState, est: PositionEstimate, cfg: TrackerConfig) -> bool:
    """Accept iff the estimate lies within gate_radius of the state position.

    The boundary is inclusive: exactly gate_radius away is accepted.
    """
    dx = est.p_hat.px - s.theta[0]
    dy = est.p_hat.py - s.theta[1]
    return math.hypot(dx, dy) <= cfg.gate_radius


def maybe_reset(s: KinematicState, last_update_t: float, cfg: TrackerConfig,
                ground_truth=None) -> tuple[KinematicState, bool]:
    """Apply the reset policy; returns (state, did_reset).

    Triggers when (i) no update was accepted for longer than reset_timeout,
    or (ii) the state lies outside area_bounds expanded by area_margin.
    The filter restarts from the ground-truth state with the initial
    covariance.
    """
    if not cfg.reset_enabled:
        return s, False
    stale = (s.t - last_update_t) > cfg.reset_timeout
    outside = not cfg.area_bounds.contains(s.theta[0], s.theta[1],
                                           margin=cfg.area_margin)
    if not (stale or outside):
        return s, False
    if ground_truth is None:
        raise ValueError("reset triggered but no ground truth state available")
    return initial_state(ground_truth, s.t, cfg), True


# ---------------------------------------------------------------------------
# Per-track driver
# ---------------------------------------------------------------------------

# Per-tick outcome codes recorded in the track log.
TICK_OK = 0
TICK_EST_FAILED = 1
TICK_GATED = 2
TICK_COV_FAILED = 3
TICK_SINGULAR = 4
TICK_INIT = 5

TICK_LABELS = {
    TICK_OK: "updated",
    TICK_EST_FAILED: "estimator-failed",
    TICK_GATED: "gated",
    TICK_COV_FAILED: "covariance-failed",
    TICK_SINGULAR: "singular-innovation",
    TICK_INIT: "init",
}


@dataclass
class TrackReport:
    """Per-tick log of one tracking run."""

    t: np.ndarray                 # (n,)
    truth: np.ndarray             # (n, 4) ground-truth [px, py, vx, vy]
    estimate: np.ndarray          # (n, 2) raw position estimates, NaN if none
    state: np.ndarray             # (n, 4) posterior filter state
    outcome: np.ndarray           # (n,) TICK_* codes
    reset: np.ndarray             # (n,) bool, reset fired on this tick
    fail_reasons: dict = field(default_factory=dict)   # reason tag -> count

    def position_errors(self) -> np.ndarray:
        return np.linalg.norm(self.state[:, :2] - self.truth[:, :2], axis=1)

    def velocity_errors(self) -> np.ndarray:
        return np.linalg.norm(self.state[:, 2:] - self.truth[:, 2:], axis=1)

    def raw_errors(self) -> np.ndarray:
        """Estimate-vs-truth distances for ticks that produced an estimate."""
        mask = ~np.isnan(self.estimate[:, 0])
        d = self.estimate[mask] - self.truth[mask, :2]
        return np.linalg.norm(d, axis=1)

    def counts(self) -> dict:
        vals, freq = np.unique(self.outcome, return_counts=True)
        out = {TICK_LABELS[int(v)]: int(n) for v, n in zip(vals, freq)}
        out["resets"] = int(self.reset.sum())
        return out


def run_track(ticks, estimator: str, cov_mode: str, cfg: TrackerConfig,
              scenario: ScenarioConfig, ml_cfg: MlConfig | None = None,
              fixed: FixedCovariance | None = None,
              cold_start: bool = False) -> TrackReport:
    """Run the filter over a measurement stream.

    ``ticks`` is a sequence of (t, truth_state, MeasurementSet) with uniform
    dt spacing; ``estimator`` is "geo" or "ml"; ``cov_mode`` is "taylor",
    "hessian", or "fixed".  Component failures are logged per tick, never
    raised.  By default the filter initializes from the first tick's ground
    truth; with ``cold_start`` it waits for the first accepted estimate and
    starts there with zero velocity.
    """
    if estimator not in ("geo", "ml"):
        raise ValueError(f"estimator must be 'geo' or 'ml', got {estimator!r}")
    if cov_mode not in ("taylor", "hessian", "fixed"):
        raise ValueError(f"unknown covariance mode {cov_mode!r}")
    if cov_mode == "fixed" and fixed is None:
        raise ValueError("cov_mode 'fixed' requires a FixedCovariance")
    if estimator == "ml" and ml_cfg is None:
        ml_cfg = MlConfig()
    fixed_cov = fixed_covariance_matrix(fixed) if fixed is not None else None

    n = len(ticks)
    rep = TrackReport(
        t=np.empty(n),
        truth=np.empty((n, 4)),
        estimate=np.full((n, 2), np.nan),
        state=np.empty((n, 4)),
        outcome=np.zeros(n, dtype=np.uint8),
        reset=np.zeros(n, dtype=bool),
    )

    state = None
    anchor = None               # last updated/reset state, the gate reference
    last_update_t = None
    for i, (t, truth, m_set) in enumerate(ticks):
        rep.t[i] = t
        rep.truth[i] = truth
        if state is None and not cold_start:
            state = initial_state(truth, t, cfg)
            anchor = state
            last_update_t = t
            rep.state[i] = state.theta
            rep.outcome[i] = TICK_INIT
            continue

        if state is not None:
            state = predict(state, cfg)

        outcome = TICK_OK
        est = None
        p_hat = None
        try:
            if estimator == "geo":
                p_hat = geo_locate(m_set, scenario)
            else:
                guess = state.position if state is not None else None
                p_hat = ml_fit(m_set, ml_cfg, scenario,
                               initial_guess=guess).p_hat
            rep.estimate[i] = (p_hat.px, p_hat.py)
        except EstimationError as exc:
            outcome = TICK_EST_FAILED
            rep.fail_reasons[exc.reason] = rep.fail_reasons.get(exc.reason, 0) + 1
        except ValueError:
            outcome = TICK_EST_FAILED
            rep.fail_reasons["invalid"] = rep.fail_reasons.get("invalid", 0) + 1

        if p_hat is not None:
            try:
                if cov_mode == "taylor":
                    cov = taylor_covariance(m_set, scenario)
                elif cov_mode == "hessian":
                    try:
                        cov = hessian_covariance(p_hat, m_set, scenario)
                    except IndefiniteHessianError:
                        if fixed_cov is None:
                            raise
                        rep.fail_reasons["indefinite-hessian"] = \
                            rep.fail_reasons.get("indefinite-hessian", 0) + 1
                        cov = fixed_cov
                else:
                    cov = fixed_cov
                est = PositionEstimate(p_hat, cov, estimator, m_set.kinds)
            except EstimationError as exc:
                outcome = TICK_COV_FAILED
                rep.fail_reasons[exc.reason] = \
                    rep.fail_reasons.get(exc.reason, 0) + 1

        if state is None:
            # cold start: adopt the first available estimate, zero velocity
            if p_hat is not None:
                state = initial_state([p_hat.px, p_hat.py, 0.0, 0.0], t, cfg)
                anchor = state
                last_update_t = t
                rep.state[i] = state.theta
                rep.outcome[i] = TICK_INIT
            else:
                rep.state[i] = np.nan
                rep.outcome[i] = outcome
            continue

        if est is not None and outcome == TICK_OK:
            # Gate against the last updated state, not the free-running
            # prediction, so a stretch of bad estimates cannot drag the
            # acceptance region away with the coasting filter.
            if gate(anchor, est, cfg):
                try:
                    state = update(state, est, cfg)
                    anchor = state
                    last_update_t = t
                except SingularInnovationError as exc:
                    outcome = TICK_SINGULAR
                    rep.fail_reasons[exc.reason] = \
                        rep.fail_reasons.get(exc.reason, 0) + 1
            else:
                outcome = TICK_GATED

        if cfg.reset_enabled:
            state, did_reset = maybe_reset(state, last_update_t, cfg,
                                           ground_truth=truth)
            if did_reset:
                rep.reset[i] = True
                anchor = state
                last_update_t = t

        rep.state[i] = state.theta
        rep.outcome[i] = outcome
    return rep
