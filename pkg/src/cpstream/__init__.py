"""Streaming changepoint detection with model checkpoints.

Online GLR testing on prediction scores evaluated under periodically cached
parameter snapshots, with Monte Carlo threshold calibration, Bayesian and
Welch-test baselines, and a continual-learning harness.
"""

from ._kernels import HAS_NUMBA
from .baselines import (
    BocpdDetector,
    NormalInverseGammaPrior,
    RunLengthPosterior,
    SimpleCdDetector,
    welch_t,
)
from .calibration import (
    CalibrationTable,
    build_table,
    fit_threshold,
    load_table,
    quantile_table,
    save_table,
    simulate_null_z,
    threshold_for,
)
from .clharness import (
    CLRunResult,
    ReplayBuffer,
    TaskStreamSpec,
    build_replay_buffer,
    make_mean_shift_stream,
    make_task_stream,
    run_continual,
)
from .core import (
    CalibrationMismatch,
    ChangepointEvent,
    DetectorConfig,
    MiniBatch,
    NumericError,
    ScoreWindow,
    SegmentStats,
    StreamError,
    mle_variance,
    score_mean_nll,
    score_transform_discrete,
)
from .detector import Checkpoint, Detector, TestDiagnostic, error_schedule, event_log_document
from .evalkit import MatchResult, match_changepoints, normality_test
from .glr import OfflineResult, neg2_log_lambda, offline_detect, z_statistic
from .models import (
    ClassifierAdapter,
    ModelAdapter,
    MovingAverageModel,
    MultiHeadClassifier,
    ScoreStreamModel,
    params_document,
    params_from_document,
)

__version__ = "0.1.0"

__all__ = [
    "HAS_NUMBA",
    "BocpdDetector",
    "NormalInverseGammaPrior",
    "RunLengthPosterior",
    "SimpleCdDetector",
    "welch_t",
    "CalibrationTable",
    "build_table",
    "fit_threshold",
    "load_table",
    "quantile_table",
    "save_table",
    "simulate_null_z",
    "threshold_for",
    "CLRunResult",
    "ReplayBuffer",
    "TaskStreamSpec",
    "build_replay_buffer",
    "make_mean_shift_stream",
    "make_task_stream",
    "run_continual",
    "CalibrationMismatch",
    "ChangepointEvent",
    "DetectorConfig",
    "MiniBatch",
    "NumericError",
    "ScoreWindow",
    "SegmentStats",
    "StreamError",
    "mle_variance",
    "score_mean_nll",
    "score_transform_discrete",
    "Checkpoint",
    "Detector",
    "TestDiagnostic",
    "error_schedule",
    "event_log_document",
    "MatchResult",
    "match_changepoints",
    "normality_test",
    "OfflineResult",
    "neg2_log_lambda",
    "offline_detect",
    "z_statistic",
    "ClassifierAdapter",
    "ModelAdapter",
    "MovingAverageModel",
    "MultiHeadClassifier",
    "ScoreStreamModel",
    "params_document",
    "params_from_document",
]
