"""Geometric-separation confidence estimation toolkit.

Score queries by how far they sit from other-class training rows versus
same-class rows, calibrate the signal into probabilities on a validation
split, and evaluate with expected calibration error. Data reductions
shrink the geometric computation for near-real-time throughput.
"""

from .base import BaseEstimator, NotFittedError
from .baseline import KNearest, NearestCentroid, fit_model
from .calibration import (
    CalibrationCurve,
    FitPair,
    IsotonicCalibrator,
    SigmoidCalibrator,
    apply_curve,
    bin_scores,
    fit_isotonic,
    fit_sigmoid,
)
from .data import (
    Dataset,
    PredictionRecord,
    Predictions,
    SplitSpec,
    load_dataset,
    load_predictions,
    save_dataset,
    save_predictions,
    split_dataset,
    split_indices,
    split_manifest,
)
from .evaluation import (
    EceReport,
    compare_signals,
    ece,
    improvement_percent,
    reliability_table,
    seed_interval,
)
from .metric import MetricKind, SetDistance, distance, set_distance
from .reduction import (
    ReducedSpace,
    Reducer,
    ReductionConfig,
    fit_reduction,
    grayscale,
    kmeans_reduce,
    pca_fit,
    pca_project,
    pool,
    resize_bilinear,
    sample_pixels,
    sample_set,
)
from .separation import (
    ClassPartition,
    ScoreTable,
    SeparationScore,
    SeparationScorer,
    batch_separation,
    exact_separation,
    fast_separation,
    pairwise_zone,
    partition,
)

__version__ = "0.1.0"

__all__ = [
    "BaseEstimator",
    "CalibrationCurve",
    "ClassPartition",
    "Dataset",
    "EceReport",
    "FitPair",
    "IsotonicCalibrator",
    "KNearest",
    "MetricKind",
    "NearestCentroid",
    "NotFittedError",
    "PredictionRecord",
    "Predictions",
    "ReducedSpace",
    "Reducer",
    "ReductionConfig",
    "ScoreTable",
    "SeparationScore",
    "SeparationScorer",
    "SetDistance",
    "SigmoidCalibrator",
    "SplitSpec",
    "apply_curve",
    "batch_separation",
    "bin_scores",
    "compare_signals",
    "distance",
    "ece",
    "exact_separation",
    "fast_separation",
    "fit_isotonic",
    "fit_model",
    "fit_reduction",
    "fit_sigmoid",
    "grayscale",
    "improvement_percent",
    "kmeans_reduce",
    "load_dataset",
    "load_predictions",
    "pairwise_zone",
    "partition",
    "pca_fit",
    "pca_project",
    "pool",
    "reliability_table",
    "resize_bilinear",
    "sample_pixels",
    "sample_set",
    "save_dataset",
    "save_predictions",
    "seed_interval",
    "set_distance",
    "split_dataset",
    "split_indices",
    "split_manifest",
]
