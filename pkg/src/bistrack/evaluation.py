"""Monte-Carlo harnesses: positioning grids, calibration, tracking campaigns.

Every random draw comes from a substream keyed on (master seed, work-item
ids), so reports are bit-identical for a given seed regardless of worker
count or scheduling.  Noise is always drawn for all three measurement kinds
and the configured subset selected from it, which pairs the realizations
across estimator configurations sharing a seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError
from .geometry import (
    ALL_KINDS,
    VARIANCE_FLOOR,
    MeasurementEntry,
    MeasurementKind,
    MeasurementSet,
    Position,
    Rect,
    ScenarioConfig,
    forward_model,
    kind_sigma,
)
from .geopos import geo_locate
from .mlpos import FixedCovariance, MlConfig, ml_fit
from .tracker import TICK_LABELS, TrackerConfig, run_track
from .trajectory import TrajectoryConfig, sample_trajectory

# Pooled statistics (RMSE tables, CDFs) are restricted to this area; the
# part below the baseline is unreachable and simply contributes nothing.
EVAL_AREA = Rect(-15.0, 15.0, -5.0, 25.0)

# Radius of the uniform-disc perturbation applied to the true position to
# seed the ML solver during Monte-Carlo runs (a grid search per draw would
# dominate the runtime).
GUESS_RADIUS = 3.0


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for one work item of a seeded campaign."""
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)))


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def rmse(errors) -> float:
    """Root mean squared Euclidean norm of error vectors (or scalars)."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise ValueError("rmse of an empty error list")
    if e.ndim == 1:
        sq = e * e
    else:
        sq = np.sum(e * e, axis=-1)
    return float(np.sqrt(np.mean(sq)))


def cdf(errors) -> np.ndarray:
    """Empirical CDF: (n, 2) array of (sorted value, cumulative fraction)."""
    e = np.sort(np.asarray(errors, dtype=float).ravel())
    if e.size == 0:
        raise ValueError("cdf of an empty error list")
    frac = np.arange(1, e.size + 1) / e.size
    return np.column_stack([e, frac])


def percentile(values, q: float) -> float:
    """Nearest-rank percentile: smallest v with CDF(v) >= q/100."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("percentile of an empty list")
    if not 0.0 < q <= 100.0:
        raise ValueError(f"q must be in (0, 100], got {q}")
    idx = max(int(math.ceil(q / 100.0 * v.size)) - 1, 0)
    return float(v[idx])


# ---------------------------------------------------------------------------
# Positioning grid evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Uniform evaluation grid with a per-point sample budget."""

    nx: int = 10
    ny: int = 10
    x_bounds: tuple[float, float] = (-15.0, 15.0)
    y_bounds: tuple[float, float] = (5.0, 35.0)
    samples_per_point: int = 5000

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid counts must be >= 1")
        if not (self.x_bounds[0] < self.x_bounds[1]
                and self.y_bounds[0] < self.y_bounds[1]):
            raise ValueError("grid bounds must be ordered")
        if self.samples_per_point < 1:
            raise ValueError("samples_per_point must be >= 1")

    def points(self) -> np.ndarray:
        """(nx*ny, 2) grid points, x fastest."""
        xs = np.linspace(self.x_bounds[0], self.x_bounds[1], self.nx)
        ys = np.linspace(self.y_bounds[0], self.y_bounds[1], self.ny)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


DESK_GRID = GridSpec(nx=5, ny=5, samples_per_point=500)


@dataclass
class EvalReport:
    """Positioning campaign results.

    Pooled statistics (per-axis/overall RMSE, mean absolute error, CDF
    samples) cover only grid points inside eval_area; the per-point map
    covers the whole grid.
    """

    grid: GridSpec
    eval_area: Rect
    point_xy: np.ndarray          # (N, 2)
    point_rmse: np.ndarray        # (N,), NaN where nothing survived
    point_used: np.ndarray        # (N,) estimates kept
    point_discarded: np.ndarray   # (N,)
    rmse_x: float
    rmse_y: float
    rmse_total: float
    mean_abs: float
    cdf_samples: np.ndarray       # sorted absolute errors, pooled
    discards: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.point_xy) * self.grid.samples_per_point

    def percentile(self, q: float) -> float:
        return percentile(self.cdf_samples, q)

    def cdf(self) -> np.ndarray:
        return cdf(self.cdf_samples)

    def to_dict(self) -> dict:
        return {
            "rmse_x": self.rmse_x,
            "rmse_y": self.rmse_y,
            "rmse": self.rmse_total,
            "mean_abs_error": self.mean_abs,
            "p95_abs_error": self.percentile(95.0) if len(self.cdf_samples)
            else None,
            "n_draws": self.n_draws,
            "n_used": int(self.point_used.sum()),
            "n_discarded": int(self.point_discarded.sum()),
            "discards_by_reason": dict(sorted(self.discards.items())),
            "eval_area": self.eval_area.as_tuple(),
        }


def _canonical(kinds) -> tuple[MeasurementKind, ...]:
    return tuple(sorted(kinds, key=lambda k: k.order))


def _eval_point(args):
    """Worker: run all samples of one grid point; returns partial sums."""
    (idx, px, py, kinds, estimator, scenario, ml_cfg, samples, seed) = args
    rng = substream(seed, idx)
    kinds = _canonical(kinds)
    sel = [ALL_KINDS.index(k) for k in kinds]
    clean = forward_model(Position(px, py), ALL_KINDS, scenario)
    sigmas = np.array([kind_sigma(k, scenario) for k in ALL_KINDS])
    variances = [max(kind_sigma(k, scenario) ** 2, VARIANCE_FLOOR)
                 for k in kinds]
    noise = rng.standard_normal((samples, len(ALL_KINDS))) * sigmas
    values = clean + noise
    # ML initial guesses: truth plus a uniform-disc offset (drawn even for
    # the geometric estimator so measurement streams stay paired)
    radius = GUESS_RADIUS * np.sqrt(rng.uniform(size=samples))
    angle = rng.uniform(0.0, 2.0 * math.pi, size=samples)
    gx = px + radius * np.cos(angle)
    gy = py + radius * np.sin(angle)

    used = 0
    discards: dict[str, int] = {}
    sq_x = sq_y = 0.0
    abs_errors = []
    for i in range(samples):
        m_set = MeasurementSet([
            MeasurementEntry(k, float(values[i, j]), variances[jj])
            for jj, (k, j) in enumerate(zip(kinds, sel))])
        try:
            if estimator == "geo":
                p_hat = geo_locate(m_set, scenario)
            else:
                p_hat = ml_fit(m_set, ml_cfg, scenario,
                               initial_guess=Position(gx[i], gy[i])).p_hat
        except EstimationError as exc:
            discards[exc.reason] = discards.get(exc.reason, 0) + 1
            continue
        ex = p_hat.px - px
        ey = p_hat.py - py
        used += 1
        sq_x += ex * ex
        sq_y += ey * ey
        abs_errors.append(math.hypot(ex, ey))
    return idx, used, discards, sq_x, sq_y, np.array(abs_errors)


def evaluate_positioning(grid: GridSpec, estimator: str, kinds,
                         cfg: ScenarioConfig, seed: int, *,
                         ml_cfg: MlConfig | None = None,
                         eval_area: Rect = EVAL_AREA,
                         workers: int = 1) -> EvalReport:
    """Per grid point, estimate positions from noisy draws and pool errors.

    ``estimator`` is "geo" or "ml".  Estimator failures (unresolvable or
    behind-baseline geometry, divergence) are counted per reason and
    excluded from the statistics.
    """
    if estimator not in ("geo", "ml"):
        raise ValueError(f"estimator must be 'geo' or 'ml', got {estimator!r}")
    if estimator == "ml" and ml_cfg is None:
        ml_cfg = MlConfig()
    pts = grid.points()
    work = [(i, float(p[0]), float(p[1]), tuple(kinds), estimator, cfg,
             ml_cfg, grid.samples_per_point, seed)
            for i, p in enumerate(pts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_point, work))
    else:
        results = [_eval_point(w) for w in work]

    n = len(pts)
    point_rmse = np.full(n, np.nan)
    point_used = np.zeros(n, dtype=int)
    point_disc = np.zeros(n, dtype=int)
    discards: dict[str, int] = {}
    pool_sq_x = pool_sq_y = 0.0
    pool_used = 0
    pooled_abs: list[np.ndarray] = []
    for idx, used, disc, sq_x, sq_y, abs_err in results:
        point_used[idx] = used
        point_disc[idx] = grid.samples_per_point - used
        if used:
            point_rmse[idx] = math.sqrt((sq_x + sq_y) / used)
        for reason, count in disc.items():
            discards[reason] = discards.get(reason, 0) + count
        if eval_area.contains(pts[idx, 0], pts[idx, 1]):
            pool_sq_x += sq_x
            pool_sq_y += sq_y
            pool_used += used
            pooled_abs.append(abs_err)

    abs_samples = (np.sort(np.concatenate(pooled_abs))
                   if pooled_abs else np.empty(0))
    if pool_used:
        rmse_x = math.sqrt(pool_sq_x / pool_used)
        rmse_y = math.sqrt(pool_sq_y / pool_used)
        rmse_total = math.sqrt((pool_sq_x + pool_sq_y) / pool_used)
        mean_abs = float(np.mean(abs_samples))
    else:
        rmse_x = rmse_y = rmse_total = mean_abs = float("nan")
    return EvalReport(grid, eval_area, pts, point_rmse, point_used,
                      point_disc, rmse_x, rmse_y, rmse_total, mean_abs,
                      abs_samples, discards)


# ---------------------------------------------------------------------------
# Fixed-covariance calibration
# ---------------------------------------------------------------------------

CALIBRATION_FLOOR = 1e-6


def calibrate_fixed_covariance(grid: GridSpec, kinds, cfg: ScenarioConfig,
                               seed: int, *, ml_cfg: MlConfig | None = None,
                               eval_area: Rect = EVAL_AREA,
                               workers: int = 1) -> FixedCovariance:
    """Per-axis squared RMSE of an ML positioning run, floored at 1e-6."""
    report = evaluate_positioning(grid, "ml", kinds, cfg, seed,
                                  ml_cfg=ml_cfg, eval_area=eval_area,
                                  workers=workers)
    return FixedCovariance(max(report.rmse_x ** 2, CALIBRATION_FLOOR),
                           max(report.rmse_y ** 2, CALIBRATION_FLOOR))


# ---------------------------------------------------------------------------
# Tracking campaign
# ---------------------------------------------------------------------------

def measurement_matrix(pos: np.ndarray, kinds,
                       cfg: ScenarioConfig) -> np.ndarray:
    """Noiseless measurements for (n, 2) positions; columns follow kinds."""
    pos = np.asarray(pos, dtype=float)
    x, y = pos[:, 0], pos[:, 1]
    cols = []
    for kd in kinds:
        if kd is MeasurementKind.BISTATIC_RANGE:
            cols.append(np.hypot(x - cfg.tx_x, y) + np.hypot(x - cfg.rx_x, y))
        elif kd is MeasurementKind.NAF_TX:
            u = x - cfg.tx_x
            cols.append(-cfg.d_over_lambda * u / np.hypot(u, y))
        elif kd is MeasurementKind.NAF_RX:
            u = x - cfg.rx_x
            cols.append(-cfg.d_over_lambda * u / np.hypot(u, y))
        else:
            raise ValueError(f"unknown measurement kind {kd}")
    return np.column_stack(cols)


@dataclass
class TrackingReport:
    """Aggregated tracking campaign results (position and velocity)."""

    n_tracks: int
    trials_per_track: int
    estimator: str
    cov_mode: str
    loc_rmse: float
    vel_rmse: float
    raw_rmse: float               # per-tick estimates before filtering
    n_loc: int
    n_raw: int
    loc_cdf_samples: np.ndarray   # sorted, decimated by cdf_stride
    vel_cdf_samples: np.ndarray
    raw_cdf_samples: np.ndarray
    cdf_stride: int
    counts: dict = field(default_factory=dict)
    fail_reasons: dict = field(default_factory=dict)
    resets: int = 0

    def loc_percentile(self, q: float) -> float:
        return percentile(self.loc_cdf_samples, q)

    def to_dict(self) -> dict:
        return {
            "n_tracks": self.n_tracks,
            "trials_per_track": self.trials_per_track,
            "estimator": self.estimator,
            "cov_mode": self.cov_mode,
            "loc_rmse": self.loc_rmse,
            "vel_rmse": self.vel_rmse,
            "raw_rmse": self.raw_rmse,
            "p95_loc_error": (percentile(self.loc_cdf_samples, 95.0)
                              if len(self.loc_cdf_samples) else None),
            "p95_raw_error": (percentile(self.raw_cdf_samples, 95.0)
                              if len(self.raw_cdf_samples) else None),
            "tick_counts": dict(sorted(self.counts.items())),
            "fail_reasons": dict(sorted(self.fail_reasons.items())),
            "resets": self.resets,
        }


def campaign_trajectory(traj_cfg: TrajectoryConfig, seed: int,
                        track_id: int) -> "Trajectory":
    """The trajectory that campaign track ``track_id`` follows under ``seed``."""
    return sample_trajectory(traj_cfg, substream(seed, track_id))


def campaign_ticks(traj, kinds, scenario: ScenarioConfig, seed: int,
                   track_id: int, trial: int) -> list:
    """Measurement stream for one trial: list of (t, truth, MeasurementSet).

    Noise is drawn for all measurement kinds and the requested columns
    selected, so streams stay paired across kind subsets.
    """
    truth = traj.truth_states()
    n = len(traj)
    kinds = _canonical(kinds)
    sel = [ALL_KINDS.index(k) for k in kinds]
    clean = measurement_matrix(traj.pos, ALL_KINDS, scenario)
    sigmas = np.array([kind_sigma(k, scenario) for k in ALL_KINDS])
    variances = [max(kind_sigma(k, scenario) ** 2, VARIANCE_FLOOR)
                 for k in kinds]
    rng = substream(seed, track_id, trial)
    values = clean + rng.standard_normal((n, len(ALL_KINDS))) * sigmas
    return [
        (traj.t[i], truth[i], MeasurementSet([
            MeasurementEntry(k, float(values[i, j]), variances[jj])
            for jj, (k, j) in enumerate(zip(kinds, sel))]))
        for i in range(n)]


def _eval_track(args):
    """Worker: all trials of one track; returns partial sums and samples."""
    (track_id, trials, kinds, estimator, cov_mode, scenario, tracker_cfg,
     traj_cfg, ml_cfg, fixed, seed, eval_area, stride, keep_reports) = args
    traj = campaign_trajectory(traj_cfg, seed, track_id)
    truth = traj.truth_states()
    n = len(traj)
    in_area = np.array([eval_area.contains(traj.pos[i, 0], traj.pos[i, 1])
                        for i in range(n)])

    loc_sq = vel_sq = raw_sq = 0.0
    n_loc = n_raw = resets = 0
    counts: dict[str, int] = {}
    reasons: dict[str, int] = {}
    loc_samples, vel_samples, raw_samples = [], [], []
    reports = [] if keep_reports else None
    for trial in range(trials):
        ticks = campaign_ticks(traj, kinds, scenario, seed, track_id, trial)
        rep = run_track(ticks, estimator, cov_mode, tracker_cfg, scenario,
                        ml_cfg=ml_cfg, fixed=fixed)
        if keep_reports:
            reports.append(rep)
        pe = rep.position_errors()[in_area]
        ve = rep.velocity_errors()[in_area]
        loc_sq += float(np.sum(pe * pe))
        vel_sq += float(np.sum(ve * ve))
        n_loc += len(pe)
        raw_mask = in_area & ~np.isnan(rep.estimate[:, 0])
        re_ = np.linalg.norm(rep.estimate[raw_mask] - truth[raw_mask, :2],
                             axis=1)
        raw_sq += float(np.sum(re_ * re_))
        n_raw += len(re_)
        loc_samples.append(pe[::stride])
        vel_samples.append(ve[::stride])
        raw_samples.append(re_[::stride])
        for label, cnt in rep.counts().items():
            counts[label] = counts.get(label, 0) + cnt
        for reason, cnt in rep.fail_reasons.items():
            reasons[reason] = reasons.get(reason, 0) + cnt
        resets += int(rep.reset.sum())
    counts.pop("resets", None)
    return (track_id, loc_sq, vel_sq, raw_sq, n_loc, n_raw,
            np.concatenate(loc_samples), np.concatenate(vel_samples),
            np.concatenate(raw_samples), counts, reasons, resets, reports)


def evaluate_tracking(n_tracks: int, trials_per_track: int, estimator: str,
                      cov_mode: str, *, kinds=ALL_KINDS,
                      scenario: ScenarioConfig | None = None,
                      tracker_cfg: TrackerConfig | None = None,
                      traj_cfg: TrajectoryConfig | None = None,
                      ml_cfg: MlConfig | None = None,
                      fixed: FixedCovariance | None = None,
                      seed: int = 0, eval_area: Rect = EVAL_AREA,
                      cdf_stride: int = 10, workers: int = 1,
                      report_sink=None) -> TrackingReport:
    """Run the tracking campaign: fresh trajectory per track, independent
    noise per trial, errors pooled over ticks whose true position lies in
    eval_area.

    When ``report_sink`` is given it is called as sink(track, trial,
    TrackReport) in campaign order from the coordinating process, letting
    callers stream per-tick logs without a second pass.
    """
    scenario = scenario or ScenarioConfig()
    tracker_cfg = tracker_cfg or TrackerConfig()
    traj_cfg = traj_cfg or TrajectoryConfig()
    if estimator == "ml" and ml_cfg is None:
        ml_cfg = MlConfig()
    work = [(ti, trials_per_track, tuple(kinds), estimator, cov_mode,
             scenario, tracker_cfg, traj_cfg, ml_cfg, fixed, seed,
             eval_area, cdf_stride, report_sink is not None)
            for ti in range(n_tracks)]

    loc_sq = vel_sq = raw_sq = 0.0
    n_loc = n_raw = resets = 0
    counts: dict[str, int] = {}
    reasons: dict[str, int] = {}
    loc_s, vel_s, raw_s = [], [], []

    def merge(results):
        nonlocal loc_sq, vel_sq, raw_sq, n_loc, n_raw, resets
        for (ti, lsq, vsq, rsq, nl, nr, ls, vs, rs, cnt, rsn, rst,
             reports) in results:
            loc_sq += lsq
            vel_sq += vsq
            raw_sq += rsq
            n_loc += nl
            n_raw += nr
            loc_s.append(ls)
            vel_s.append(vs)
            raw_s.append(rs)
            for k, v in cnt.items():
                counts[k] = counts.get(k, 0) + v
            for k, v in rsn.items():
                reasons[k] = reasons.get(k, 0) + v
            resets += rst
            if report_sink is not None:
                for trial, rep in enumerate(reports):
                    report_sink(ti, trial, rep)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            merge(pool.map(_eval_track, work))
    else:
        merge(_eval_track(w) for w in work)

    return TrackingReport(
        n_tracks=n_tracks, trials_per_track=trials_per_track,
        estimator=estimator, cov_mode=cov_mode,
        loc_rmse=math.sqrt(loc_sq / n_loc) if n_loc else float("nan"),
        vel_rmse=math.sqrt(vel_sq / n_loc) if n_loc else float("nan"),
        raw_rmse=math.sqrt(raw_sq / n_raw) if n_raw else float("nan"),
        n_loc=n_loc, n_raw=n_raw,
        loc_cdf_samples=np.sort(np.concatenate(loc_s)) if loc_s else np.empty(0),
        vel_cdf_samples=np.sort(np.concatenate(vel_s)) if vel_s else np.empty(0),
        raw_cdf_samples=np.sort(np.concatenate(raw_s)) if raw_s else np.empty(0),
        cdf_stride=cdf_stride, counts=counts, fail_reasons=reasons,
        resets=resets)
