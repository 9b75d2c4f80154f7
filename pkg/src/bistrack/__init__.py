"""Bistatic target positioning and tracking toolkit.

Forward geometry, geometric and maximum-likelihood position estimation,
converted-measurement Kalman tracking, trajectory generation, and
Monte-Carlo evaluation harnesses, plus a CLI for reproducible runs.
"""

from .errors import (
    BehindBaselineError,
    ConfigError,
    DegenerateEllipseError,
    EstimationError,
    IndefiniteHessianError,
    MlDivergedError,
    SingularInnovationError,
    UnderDeterminedError,
    UnresolvableGeometryError,
)
from .geometry import (
    ALL_KINDS,
    MeasurementEntry,
    MeasurementKind,
    MeasurementSet,
    Position,
    Rect,
    ScenarioConfig,
    aoa,
    aod,
    bistatic_range,
    forward_model,
    inverse_naf,
    naf,
    sample_noisy,
)
from .geopos import (
    PositionEstimate,
    bistatic_to_monostatic_range,
    geo_estimate,
    geo_locate,
    locate_from_angle_range,
    locate_from_angles,
    taylor_covariance,
)
from .mlpos import (
    FixedCovariance,
    MlConfig,
    fixed_covariance_matrix,
    hessian_covariance,
    log_likelihood,
    ml_estimate,
    ml_fit,
)
from .tracker import (
    KinematicState,
    TrackerConfig,
    TrackReport,
    gate,
    initial_state,
    maybe_reset,
    predict,
    run_track,
    update,
)
from .trajectory import (
    BezierPath,
    SpeedProfile,
    Trajectory,
    TrajectoryConfig,
    bezier_path,
    sample_trajectory,
)
from .evaluation import (
    DESK_GRID,
    EVAL_AREA,
    EvalReport,
    GridSpec,
    TrackingReport,
    calibrate_fixed_covariance,
    campaign_ticks,
    campaign_trajectory,
    cdf,
    evaluate_positioning,
    evaluate_tracking,
    percentile,
    rmse,
    substream,
)
from .config import (
    ExperimentConfig,
    FusionConfig,
    benchmark_preset,
    load_config,
    parse_config,
    serialize_config,
)

__version__ = "0.1.0"
