"""Kinematic assessment of upper-limb movements from smartwatch inertial logs.

Logs are segmented into gestures, classified with an SVM, and each movement
is decomposed into 3D Sigma-Lognormal strokes whose reconstruction SNR
serves as a motor-control score.
"""

__version__ = "0.1.0"

from .errors import LognokitError  # noqa: E402
from .ingest import (  # noqa: E402
    Cohort,
    ImuSample,
    MovementClass,
    Scenario,
    SensorLog,
    SessionMeta,
    Wrist,
    parse_log,
    read_log,
    resample_uniform,
    synchronize_pair,
)
from .preprocess import VelocityProfile, detrend, integrate_velocity, lowpass, velocity_from_acc  # noqa: E402
from .segmentation import Segment, SegmentSource, spot_gestures, window_segments  # noqa: E402
from .classify import (  # noqa: E402
    CvReport,
    FeatureVector,
    SvmConfig,
    SvmModel,
    cross_validate,
    extract_features,
    predict,
    train_svm,
)
from .siglognormal import (  # noqa: E402
    ExtractConfig,
    LognormalComponent3D,
    ReconstructionResult,
    SigmaLognormalModel,
    compute_snr,
    estimate_component,
    extract_model,
    refine_model,
    synthesize_velocity,
)
from .stats import CohortStats, RankTestResult, cohort_stats, mann_whitney_u  # noqa: E402
from .synth import SynthCohortConfig, synth_cohort  # noqa: E402

__all__ = [
    "Cohort", "CohortStats", "CvReport", "ExtractConfig", "FeatureVector", "ImuSample",
    "LognokitError", "LognormalComponent3D", "MovementClass", "RankTestResult", "ReconstructionResult",
    "Scenario", "Segment", "SegmentSource", "SensorLog", "SessionMeta", "SigmaLognormalModel",
    "SvmConfig", "SvmModel", "SynthCohortConfig", "VelocityProfile", "Wrist", "cohort_stats",
    "compute_snr", "cross_validate", "detrend", "estimate_component", "extract_features",
    "extract_model", "integrate_velocity", "lowpass", "mann_whitney_u", "parse_log", "predict",
    "read_log", "refine_model", "resample_uniform", "spot_gestures", "synchronize_pair",
    "synth_cohort", "synthesize_velocity", "train_svm", "velocity_from_acc", "window_segments",
]
