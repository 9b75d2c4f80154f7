"""Exception types shared across the positioning and tracking modules.

Each estimation failure carries a short machine-readable ``reason`` tag so
Monte-Carlo harnesses can count discards by cause.
"""


class ConfigError(ValueError):
    """Invalid configuration value or structure."""


class EstimationError(ValueError):
    """Base class for recoverable estimator failures."""

    reason = "estimation-error"


class UnresolvableGeometryError(EstimationError):
    """Angle rays are (near-)parallel; the intersection is unbounded."""

    reason = "unresolvable-geometry"


class BehindBaselineError(EstimationError):
    """Converted location fell behind the baseline (y < 0)."""

    reason = "behind-baseline"


class DegenerateEllipseError(EstimationError):
    """Angle/range combination has no valid ellipse intersection."""

    reason = "degenerate-ellipse"


class UnderDeterminedError(EstimationError):
    """Fewer measurement kinds than needed for a unique 2D solution."""

    reason = "under-determined"


class MlDivergedError(EstimationError):
    """ML solver hit the iteration cap and grid reseeding did not recover."""

    reason = "ml-diverged"


class IndefiniteHessianError(EstimationError):
    """Log-likelihood Hessian is not negative definite at the estimate."""

    reason = "indefinite-hessian"


class SingularInnovationError(EstimationError):
    """Kalman update innovation covariance is singular."""

    reason = "singular-innovation"
