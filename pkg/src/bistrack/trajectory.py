"""Pseudorandom smooth target trajectories.

A random-walk waypoint sequence is interpolated with C1 piecewise cubic
Bezier curves (Catmull-Rom style tangents), re-parameterized by arc length,
and traversed with a sinusoidal speed profile sampled at the update rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Position, Rect

DEFAULT_AREA = Rect(-15.0, 15.0, 5.0, 25.0)

# Tangent scale for the Catmull-Rom style construction: T_i = TANGENT_SCALE
# * (w_{i+1} - w_{i-1}) at interior waypoints, one-sided at the ends.
TANGENT_SCALE = 0.5


@dataclass(frozen=True)
class TrajectoryConfig:
    """Knobs for the random-walk / Bezier / speed-profile generator."""

    area: Rect = DEFAULT_AREA
    duration: float = 60.0
    dt: float = 0.01
    speed_min: float = 0.5
    speed_max: float = 3.0
    period_choices: tuple[float, ...] = (30.0, 70.0, 100.0, 1e8)
    waypoint_step: float = 6.0
    turn_std: float = 0.6
    seed: int | None = None

    def __post_init__(self):
        if not self.speed_min < self.speed_max:
            raise ValueError("speed_min must be < speed_max")
        if not (self.duration > 0 and self.dt > 0):
            raise ValueError("duration and dt must be > 0")
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(
                f"duration must be an integer multiple of dt, got "
                f"{self.duration}/{self.dt}")
        if len(self.period_choices) == 0:
            raise ValueError("period_choices must be non-empty")
        if not self.waypoint_step > 0:
            raise ValueError("waypoint_step must be > 0")
        if self.turn_std < 0:
            raise ValueError("turn_std must be >= 0")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.dt)) + 1


# ---------------------------------------------------------------------------
# Waypoints
# ---------------------------------------------------------------------------

def _reflect(value: float, lo: float, hi: float) -> float:
    """Fold value into [lo, hi] by mirror reflection at the bounds."""
    span = hi - lo
    v = (value - lo) % (2.0 * span)
    if v > span:
        v = 2.0 * span - v
    return lo + v


def generate_waypoints(cfg: TrajectoryConfig, rng: np.random.Generator,
                       count: int | None = None) -> np.ndarray:
    """Random-walk waypoints: fixed leg length, Gaussian heading increments.

    The first point is uniform in the area; legs leaving the area are
    reflected back at the boundary.  Returns an (n, 2) array with enough
    points to cover the full duration at speed_max unless ``count`` says
    otherwise.
    """
    a = cfg.area
    if count is None:
        count = int(math.ceil(cfg.duration * cfg.speed_max
                              / cfg.waypoint_step)) + 2
    pts = np.empty((count, 2))
    pts[0] = (rng.uniform(a.x_min, a.x_max), rng.uniform(a.y_min, a.y_max))
    heading = rng.uniform(0.0, 2.0 * math.pi)
    extend_waypoints(pts, 1, heading, cfg, rng, turn_first=False)
    return pts


def extend_waypoints(out: np.ndarray, start: int, heading: float,
                     cfg: TrajectoryConfig, rng: np.random.Generator,
                     turn_first: bool = True) -> float:
    """Continue the walk from out[start-1], filling out[start:].

    The heading gets a Gaussian increment before every leg except, when
    ``turn_first`` is false, the very first one (whose direction was drawn
    uniformly).  Returns the final heading so the walk can be continued.
    """
    a = cfg.area
    x, y = out[start - 1]
    for i in range(start, len(out)):
        if turn_first or i > start:
            heading += rng.normal(0.0, cfg.turn_std)
        nx = x + cfg.waypoint_step * math.cos(heading)
        ny = y + cfg.waypoint_step * math.sin(heading)
        rx = _reflect(nx, a.x_min, a.x_max)
        ry = _reflect(ny, a.y_min, a.y_max)
        if rx != nx or ry != ny:
            # keep the heading consistent with the reflected direction
            heading = math.atan2(ry - y, rx - x)
        x, y = rx, ry
        out[i] = (x, y)
    return heading


# ---------------------------------------------------------------------------
# Bezier path
# ---------------------------------------------------------------------------

class BezierPath:
    """C1 piecewise-cubic Bezier through the waypoints, arc-length indexed.

    The curve parameter u runs over [0, n_segments]; integer values hit the
    waypoints.  An adaptive-subdivision table maps arc length to u with a
    relative error no worse than about 1e-4.
    """

    def __init__(self, waypoints: np.ndarray, area: Rect | None = None):
        w = np.asarray(waypoints, dtype=float)
        if w.ndim != 2 or w.shape[1] != 2 or len(w) < 2:
            raise ValueError("need at least 2 waypoints of shape (n, 2)")
        self.waypoints = w
        tangents = np.empty_like(w)
        tangents[1:-1] = TANGENT_SCALE * (w[2:] - w[:-2])
        tangents[0] = TANGENT_SCALE * (w[1] - w[0])
        tangents[-1] = TANGENT_SCALE * (w[-1] - w[-2])
        if area is not None:
            tangents = _clip_tangents(w, tangents, area)
        n_seg = len(w) - 1
        ctrl = np.empty((n_seg, 4, 2))
        ctrl[:, 0] = w[:-1]
        ctrl[:, 1] = w[:-1] + tangents[:-1] / 3.0
        ctrl[:, 2] = w[1:] - tangents[1:] / 3.0
        ctrl[:, 3] = w[1:]
        self.control = ctrl
        self.n_segments = n_seg
        self._build_table()

    def point(self, u) -> np.ndarray:
        """Position(s) at curve parameter u; shape (..., 2)."""
        u = np.asarray(u, dtype=float)
        seg = np.clip(np.floor(u).astype(int), 0, self.n_segments - 1)
        s = (u - seg)[..., None]
        b = self.control[seg]
        c = 1.0 - s
        return (c * c * c * b[..., 0, :] + 3.0 * c * c * s * b[..., 1, :]
                + 3.0 * c * s * s * b[..., 2, :] + s * s * s * b[..., 3, :])

    def derivative(self, u) -> np.ndarray:
        """dp/du at parameter u; shape (..., 2)."""
        u = np.asarray(u, dtype=float)
        seg = np.clip(np.floor(u).astype(int), 0, self.n_segments - 1)
        s = (u - seg)[..., None]
        b = self.control[seg]
        c = 1.0 - s
        return 3.0 * (c * c * (b[..., 1, :] - b[..., 0, :])
                      + 2.0 * c * s * (b[..., 2, :] - b[..., 1, :])
                      + s * s * (b[..., 3, :] - b[..., 2, :]))

    @property
    def length(self) -> float:
        return float(self._s_table[-1])

    def u_at_length(self, dist):
        """Curve parameter at the given arc length(s) from the start."""
        d = np.clip(np.asarray(dist, dtype=float), 0.0, self.length)
        return np.interp(d, self._s_table, self._u_table)

    def _point_scalar(self, k: int, s: float) -> tuple[float, float]:
        b = self.control[k]
        c = 1.0 - s
        w0 = c * c * c
        w1 = 3.0 * c * c * s
        w2 = 3.0 * c * s * s
        w3 = s * s * s
        return (w0 * b[0, 0] + w1 * b[1, 0] + w2 * b[2, 0] + w3 * b[3, 0],
                w0 * b[0, 1] + w1 * b[1, 1] + w2 * b[2, 1] + w3 * b[3, 1])

    def _build_table(self):
        us = [0.0]
        lengths = [0.0]
        for k in range(self.n_segments):
            self._refine(k, 0.0, 1.0, self._point_scalar(k, 0.0),
                         self._point_scalar(k, 1.0), us, lengths, 0)
        self._u_table = np.array(us)
        self._s_table = np.cumsum(lengths)

    def _refine(self, k, s0, s1, p0, p1, us, lengths, depth):
        sm = 0.5 * (s0 + s1)
        pm = self._point_scalar(k, sm)
        half_l = math.hypot(pm[0] - p0[0], pm[1] - p0[1])
        half_r = math.hypot(p1[0] - pm[0], p1[1] - pm[1])
        l0 = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
        l1 = half_l + half_r
        # Two acceptance tests: the chord-vs-halves test bounds the arc
        # length error, the left/right balance test bounds how nonlinear
        # s(u) is inside the cell (the chord test alone is blind to that,
        # e.g. on straight pieces with uneven parameterization).  A deep
        # minimum keeps the interpolation table dense regardless.
        converged = (l1 - l0 <= 1e-5 * l1 + 1e-12
                     and abs(half_l - half_r) <= 0.01 * l1 + 1e-12)
        if depth >= 5 and (converged or depth >= 24):
            # Richardson-style correction of the two-chord estimate,
            # apportioned by the measured half lengths
            seg_len = l1 + (l1 - l0) / 3.0
            us.extend((k + sm, k + s1))
            if l1 > 0.0:
                lengths.extend((seg_len * half_l / l1, seg_len * half_r / l1))
            else:
                lengths.extend((0.0, 0.0))
            return
        self._refine(k, s0, sm, p0, pm, us, lengths, depth + 1)
        self._refine(k, sm, s1, pm, p1, us, lengths, depth + 1)


def _clip_tangents(w: np.ndarray, tangents: np.ndarray,
                   area: Rect) -> np.ndarray:
    """Shrink tangents so every control point stays inside the area.

    Both control points adjacent to a waypoint are offset by +-T/3, so one
    shared scale per waypoint keeps the curve C1; the control polygon (and
    with it the curve, by the convex-hull property) then stays inside.
    """
    out = tangents.copy()
    for i in range(len(w)):
        tx, ty = tangents[i] / 3.0
        scale = 1.0
        if tx != 0.0:
            room = min(area.x_max - w[i, 0], w[i, 0] - area.x_min)
            scale = min(scale, max(room, 0.0) / abs(tx))
        if ty != 0.0:
            room = min(area.y_max - w[i, 1], w[i, 1] - area.y_min)
            scale = min(scale, max(room, 0.0) / abs(ty))
        if scale < 1.0:
            out[i] = tangents[i] * scale
    return out


def bezier_path(waypoints, area: Rect | None = None) -> BezierPath:
    return BezierPath(np.asarray(waypoints, dtype=float), area)


# ---------------------------------------------------------------------------
# Speed profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeedProfile:
    """s(t) = mid + amp * sin(2 pi t / period + phase)."""

    speed_min: float
    speed_max: float
    period: float
    phase: float

    def speed(self, t):
        mid = 0.5 * (self.speed_min + self.speed_max)
        amp = 0.5 * (self.speed_max - self.speed_min)
        return mid + amp * np.sin(2.0 * np.pi * np.asarray(t, dtype=float)
                                  / self.period + self.phase)

    __call__ = speed


def draw_profile(cfg: TrajectoryConfig, rng: np.random.Generator) -> SpeedProfile:
    period = cfg.period_choices[int(rng.integers(len(cfg.period_choices)))]
    phase = float(rng.uniform(0.0, 2.0 * math.pi))
    return SpeedProfile(cfg.speed_min, cfg.speed_max, float(period), phase)


def speed_profile(t, cfg: TrajectoryConfig, period: float, phase: float):
    """Speed at time(s) t for a drawn (period, phase) pair."""
    return SpeedProfile(cfg.speed_min, cfg.speed_max, period, phase).speed(t)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """A sampled track: arrays t (n,), pos (n, 2), vel (n, 2)."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    waypoints: np.ndarray
    profile: SpeedProfile

    @property
    def samples(self):
        """Iterate (t, Position, velocity) tuples."""
        for i in range(len(self.t)):
            yield (float(self.t[i]),
                   Position(float(self.pos[i, 0]), float(self.pos[i, 1])),
                   self.vel[i])

    def truth_states(self) -> np.ndarray:
        """(n, 4) array of [px, py, vx, vy] rows for the tracker."""
        return np.hstack([self.pos, self.vel])

    def __len__(self) -> int:
        return len(self.t)


def sample_trajectory(cfg: TrajectoryConfig,
                      rng: np.random.Generator | None = None) -> Trajectory:
    """Generate one trajectory: waypoints, Bezier path, sinusoidal speed.

    Distance travelled is the trapezoidal integral of the speed profile on
    the dt grid; positions come from the arc-length table, velocities from
    central differences (one-sided at the ends).
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    profile = draw_profile(cfg, rng)
    n = cfg.n_samples
    t = np.arange(n) * cfg.dt
    speeds = profile.speed(t)
    dist = np.concatenate(([0.0], np.cumsum(
        0.5 * cfg.dt * (speeds[1:] + speeds[:-1]))))

    waypoints = generate_waypoints(cfg, rng)
    last_leg = waypoints[-1] - waypoints[-2]
    heading = math.atan2(last_leg[1], last_leg[0])
    path = BezierPath(waypoints, cfg.area)
    while path.length < dist[-1]:
        extra = np.empty((len(waypoints) + 8, 2))
        extra[:len(waypoints)] = waypoints
        heading = extend_waypoints(extra, len(waypoints), heading, cfg, rng)
        waypoints = extra
        path = BezierPath(waypoints, cfg.area)

    pos = path.point(path.u_at_length(dist))
    vel = np.empty_like(pos)
    vel[1:-1] = (pos[2:] - pos[:-2]) / (2.0 * cfg.dt)
    vel[0] = (pos[1] - pos[0]) / cfg.dt
    vel[-1] = (pos[-1] - pos[-2]) / cfg.dt
    return Trajectory(t, pos, vel, waypoints, profile)


def trajectory_to_csv(traj: Trajectory, fh) -> None:
    """Write t, px, py, vx, vy rows (9 significant digits)."""
    fh.write("t,px,py,vx,vy\n")
    for i in range(len(traj)):
        fh.write("%.9g,%.9g,%.9g,%.9g,%.9g\n" % (
            traj.t[i], traj.pos[i, 0], traj.pos[i, 1],
            traj.vel[i, 0], traj.vel[i, 1]))
