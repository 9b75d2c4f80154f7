"""Maximum-likelihood fusion of 1-3 bistatic measurements.

The ML estimate minimizes the variance-weighted squared residual between
the measurement vector and the forward model, via damped Gauss-Newton with
the target constrained to y >= y_min.  The error covariance is either the
inverted negative analytic Hessian of the log-likelihood at the estimate,
or a calibrated fixed diagonal matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IndefiniteHessianError, MlDivergedError, \
    UnderDeterminedError
from .geometry import (
    MeasurementKind,
    MeasurementSet,
    Position,
    ScenarioConfig,
    _xy,
)
from .geopos import PositionEstimate

_RANGE = MeasurementKind.BISTATIC_RANGE


@dataclass(frozen=True)
class MlConfig:
    """Solver settings for the ML fit."""

    y_min: float = 0.1                      # lower bound on target y [m]
    initial_guess: Position | None = None
    max_iterations: int = 100
    gradient_tolerance: float = 1e-8
    step_tolerance: float = 1e-11           # accepted-step size that counts as converged
    grid_fallback: bool = True
    # Search box for both the grid seeding and the fit itself.  Without the
    # box, angle-only likelihoods whose rays fail to cross have their
    # infimum at infinite range and the iteration would run away.
    x_bounds: tuple[float, float] = (-20.0, 20.0)
    y_bounds: tuple[float, float] = (0.1, 40.1)

    def __post_init__(self):
        if not self.y_min > 0:
            raise ConfigError(f"y_min must be > 0, got {self.y_min}")
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.gradient_tolerance > 0:
            raise ConfigError(
                f"gradient_tolerance must be > 0, got {self.gradient_tolerance}")
        if not self.x_bounds[0] < self.x_bounds[1]:
            raise ConfigError(f"x_bounds must be ordered, got {self.x_bounds}")
        if not self.y_bounds[0] < self.y_bounds[1]:
            raise ConfigError(f"y_bounds must be ordered, got {self.y_bounds}")
        if not self.y_bounds[1] > self.y_min:
            raise ConfigError("y_bounds must leave room above y_min")


@dataclass(frozen=True)
class FixedCovariance:
    """Position-independent per-axis location error variances [m^2]."""

    sigma_x2: float
    sigma_y2: float

    def __post_init__(self):
        if not (self.sigma_x2 > 0 and self.sigma_y2 > 0):
            raise ConfigError(f"fixed covariance variances must be > 0, got {self}")


def fixed_covariance_matrix(fc: FixedCovariance) -> np.ndarray:
    """diag(sigma_x^2, sigma_y^2); x/y errors assumed uncorrelated."""
    return np.diag([fc.sigma_x2, fc.sigma_y2])


def _entry_params(m_set: MeasurementSet, cfg: ScenarioConfig):
    """Flatten a measurement set into plain tuples for the scalar hot loops.

    Returns (is_range, tx_x, rx_x, value, weight) per entry, where for NAF
    entries tx_x holds the owning array's x-position.
    """
    params = []
    for e in m_set.entries:
        tx = cfg.tx_x if e.tx_x is None else e.tx_x
        rx = cfg.rx_x if e.rx_x is None else e.rx_x
        if e.kind is _RANGE:
            params.append((True, tx, rx, e.value, 1.0 / e.variance))
        else:
            station = tx if e.kind is MeasurementKind.NAF_TX else rx
            params.append((False, station, 0.0, e.value, 1.0 / e.variance))
    return params


def _model_terms(x: float, y: float, params, k: float):
    """Value and position gradient of the forward model per entry."""
    out = []
    for is_range, a, b, _m, _w in params:
        if is_range:
            u1 = x - a
            u2 = x - b
            s1 = math.hypot(u1, y)
            s2 = math.hypot(u2, y)
            out.append((s1 + s2, u1 / s1 + u2 / s2, y / s1 + y / s2))
        else:
            u = x - a
            rho2 = u * u + y * y
            rho = math.sqrt(rho2)
            rho3 = rho2 * rho
            out.append((-k * u / rho, -k * y * y / rho3, k * u * y / rho3))
    return out


def _cost(x: float, y: float, params, k: float) -> float:
    total = 0.0
    for is_range, a, b, m, w in params:
        if is_range:
            f = math.hypot(x - a, y) + math.hypot(x - b, y)
        else:
            u = x - a
            f = -k * u / math.hypot(u, y)
        r = f - m
        total += w * r * r
    return total


def log_likelihood(p, m_set: MeasurementSet, cfg: ScenarioConfig) -> float:
    """Log of the Gaussian measurement likelihood at candidate position p."""
    x, y = _xy(p)
    if not y > 0:
        raise ValueError(f"log-likelihood domain requires py > 0, got {y}")
    params = _entry_params(m_set, cfg)
    q = _cost(x, y, params, cfg.d_over_lambda)
    norm = sum(math.log(2.0 * math.pi * e.variance) for e in m_set.entries)
    return -0.5 * q - 0.5 * norm


def _grid_seed(params, k: float, x_bounds, y_bounds, n: int = 101):
    """Coarse brute-force cost scan; returns the cell with the lowest cost."""
    xs = np.linspace(x_bounds[0], x_bounds[1], n)
    ys = np.linspace(y_bounds[0], y_bounds[1], n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    total = np.zeros_like(gx)
    for is_range, a, b, m, w in params:
        if is_range:
            f = np.hypot(gx - a, gy) + np.hypot(gx - b, gy)
        else:
            u = gx - a
            f = -k * u / np.hypot(u, gy)
        total += w * (f - m) ** 2
    i, j = np.unravel_index(np.argmin(total), total.shape)
    return float(xs[i]), float(ys[j])


def _gauss_newton(x, y, params, k, ml_cfg: MlConfig):
    """Damped Gauss-Newton on the weighted least-squares cost.

    Returns (x, y) on convergence, None on hitting the iteration cap.
    """
    x_lo, x_hi = ml_cfg.x_bounds
    y_lo = max(ml_cfg.y_min, ml_cfg.y_bounds[0])
    y_hi = ml_cfg.y_bounds[1]
    x = min(max(x, x_lo), x_hi)
    y = min(max(y, y_lo), y_hi)
    cost = _cost(x, y, params, k)
    terms = _model_terms(x, y, params, k)
    lam = 1e-3
    for _ in range(ml_cfg.max_iterations):
        g1 = g2 = n11 = n12 = n22 = 0.0
        for (f, fx, fy), (_ir, _a, _b, m, w) in zip(terms, params):
            r = f - m
            g1 += w * r * fx
            g2 += w * r * fy
            n11 += w * fx * fx
            n12 += w * fx * fy
            n22 += w * fy * fy
        # active-set handling: on a face of the search box where the
        # descent direction (-g) points outside, freeze that coordinate
        # and solve the remaining 1-D problem along the face
        x_active = (x <= x_lo and g1 > 0.0) or (x >= x_hi and g1 < 0.0)
        y_active = (y <= y_lo and g2 > 0.0) or (y >= y_hi and g2 < 0.0)
        pg1 = 0.0 if x_active else g1
        pg2 = 0.0 if y_active else g2
        if 2.0 * math.hypot(pg1, pg2) < ml_cfg.gradient_tolerance:
            return x, y
        a11 = n11 * (1.0 + lam)
        a22 = n22 * (1.0 + lam)
        if x_active or y_active:
            denom = a22 if x_active else a11
            if not denom > 0 or not math.isfinite(denom):
                lam = min(lam * 10.0, 1e12)
                continue
            dx = 0.0 if x_active else -g1 / a11
            dy = -g2 / a22 if x_active else 0.0
        else:
            det = a11 * a22 - n12 * n12
            if not det > 0 or not math.isfinite(det):
                lam = min(lam * 10.0, 1e12)
                continue
            dx = (-g1 * a22 + g2 * n12) / det
            dy = (-g2 * a11 + g1 * n12) / det
        tx = min(max(x + dx, x_lo), x_hi)
        ty = min(max(y + dy, y_lo), y_hi)
        if math.hypot(tx - x, ty - y) < ml_cfg.step_tolerance:
            return x, y
        trial = _cost(tx, ty, params, k)
        if trial < cost:
            x, y, cost = tx, ty, trial
            terms = _model_terms(x, y, params, k)
            lam = max(lam * 0.1, 1e-12)
        else:
            lam = min(lam * 10.0, 1e12)
    return None


def ml_fit(m_set: MeasurementSet, ml_cfg: MlConfig, cfg: ScenarioConfig,
           initial_guess: Position | None = None) -> PositionEstimate:
    """Weighted nonlinear least-squares position fit.

    Initial guess precedence: ``initial_guess`` argument (e.g. the tracker
    prediction), then ``ml_cfg.initial_guess``, then a coarse grid scan.
    The search is confined to the ml_cfg x_bounds/y_bounds box (and to
    py >= y_min); a fit may legitimately end on the box boundary when the
    measurements point out of the surveillance region.  The returned
    estimate carries no covariance; attach one via hessian_covariance or
    fixed_covariance_matrix.
    """
    if len(m_set) < 2:
        raise UnderDeterminedError(
            f"under-determined: {len(m_set)} measurement(s), need >= 2")
    params = _entry_params(m_set, cfg)
    k = cfg.d_over_lambda
    guess = initial_guess if initial_guess is not None else ml_cfg.initial_guess
    if guess is None:
        x0, y0 = _grid_seed(params, k, ml_cfg.x_bounds, ml_cfg.y_bounds)
    else:
        x0, y0 = _xy(guess)
    result = _gauss_newton(x0, y0, params, k, ml_cfg)
    if result is None and ml_cfg.grid_fallback and guess is not None:
        x0, y0 = _grid_seed(params, k, ml_cfg.x_bounds, ml_cfg.y_bounds)
        result = _gauss_newton(x0, y0, params, k, ml_cfg)
    if result is None:
        raise MlDivergedError("ml-diverged: iteration cap without convergence")
    return PositionEstimate(Position(result[0], result[1]), None, "ml", m_set.kinds)


def _second_order_terms(x: float, y: float, params, k: float):
    """Per-entry (residual-free) value, gradient, and Hessian of the model."""
    out = []
    for is_range, a, b, _m, _w in params:
        if is_range:
            u1 = x - a
            u2 = x - b
            s1 = math.hypot(u1, y)
            s2 = math.hypot(u2, y)
            s13 = s1 * s1 * s1
            s23 = s2 * s2 * s2
            f = s1 + s2
            fx = u1 / s1 + u2 / s2
            fy = y / s1 + y / s2
            fxx = y * y / s13 + y * y / s23
            fxy = -u1 * y / s13 - u2 * y / s23
            fyy = u1 * u1 / s13 + u2 * u2 / s23
        else:
            u = x - a
            rho2 = u * u + y * y
            rho = math.sqrt(rho2)
            rho3 = rho2 * rho
            rho5 = rho3 * rho2
            f = -k * u / rho
            fx = -k * y * y / rho3
            fy = k * u * y / rho3
            fxx = 3.0 * k * u * y * y / rho5
            fxy = -k * y * (2.0 * rho2 - 3.0 * y * y) / rho5
            fyy = k * u * (rho2 - 3.0 * y * y) / rho5
        out.append((f, fx, fy, fxx, fxy, fyy))
    return out


def log_likelihood_hessian(p_hat, m_set: MeasurementSet,
                           cfg: ScenarioConfig) -> np.ndarray:
    """Analytic Hessian of the log-likelihood w.r.t. (px, py) at p_hat."""
    x, y = _xy(p_hat)
    if not y > 0:
        raise ValueError(f"Hessian domain requires py > 0, got {y}")
    params = _entry_params(m_set, cfg)
    h11 = h12 = h22 = 0.0
    for (f, fx, fy, fxx, fxy, fyy), (_ir, _a, _b, m, w) in zip(
            _second_order_terms(x, y, params, cfg.d_over_lambda), params):
        r = f - m
        h11 -= w * (fx * fx + r * fxx)
        h12 -= w * (fx * fy + r * fxy)
        h22 -= w * (fy * fy + r * fyy)
    return np.array([[h11, h12], [h12, h22]])


def hessian_covariance(p_hat, m_set: MeasurementSet,
                       cfg: ScenarioConfig) -> np.ndarray:
    """Location error covariance as the inverted negative Hessian.

    Raises IndefiniteHessianError when the Hessian is not negative definite
    at p_hat (callers typically fall back to a fixed covariance).
    """
    h = log_likelihood_hessian(p_hat, m_set, cfg)
    m11, m12, m22 = -h[0, 0], -h[0, 1], -h[1, 1]
    det = m11 * m22 - m12 * m12
    if not (m11 > 0 and det > 0):
        raise IndefiniteHessianError(
            f"indefinite-hessian: leading minor {m11:.3e}, det {det:.3e}")
    return np.array([[m22, -m12], [-m12, m11]]) / det


def ml_estimate(m_set: MeasurementSet, ml_cfg: MlConfig, cfg: ScenarioConfig,
                initial_guess: Position | None = None,
                fixed: FixedCovariance | None = None) -> PositionEstimate:
    """ML fit plus covariance: fixed when given, else the analytic Hessian."""
    est = ml_fit(m_set, ml_cfg, cfg, initial_guess=initial_guess)
    if fixed is not None:
        cov = fixed_covariance_matrix(fixed)
    else:
        cov = hessian_covariance(est.p_hat, m_set, cfg)
    return PositionEstimate(est.p_hat, cov, est.method, est.used_kinds)
