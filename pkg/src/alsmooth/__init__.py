"""Objectness-adaptive label smoothing at desk scale.

A library and CLI covering the full pipeline: augmentation-consistent
object-proportion measurement, adaptive soft-label construction, a
deterministic synthetic dataset with controllable contextual bias, a small
trainable classifier, and a calibration metric suite.
"""

from .calibration import (
    CalibrationReport,
    PredictionRecord,
    ReliabilityBin,
    accuracy,
    average_confidence,
    ece,
    mce,
    mean_deviation,
    overconfidence,
    report,
    underconfidence,
)
from .geometry import (
    AugmentTransform,
    BoundingBox,
    ImageFrame,
    ObjectMask,
    apply_transform,
    objectness_analytic,
    objectness_pixels,
    transformed_objectness,
)
from .labeling import (
    LabelingPolicy,
    adaptive_label,
    context_label,
    hard_label,
    smoothing_from_objectness,
    uniform_smooth_label,
)
from .losses import cross_entropy, cross_entropy_grad, log_softmax, softmax
from .model import ConvNet, NetConfig, NumericError, TrainConfig, train
from .synthdata import (
    AnnotatedSample,
    Dataset,
    SamplerConfig,
    SceneSpec,
    build_eval_sets,
    draw_training_item,
    generate_dataset,
    generate_sample,
    remove_objects,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedSample",
    "AugmentTransform",
    "BoundingBox",
    "CalibrationReport",
    "ConvNet",
    "Dataset",
    "ImageFrame",
    "LabelingPolicy",
    "NetConfig",
    "NumericError",
    "ObjectMask",
    "PredictionRecord",
    "ReliabilityBin",
    "SamplerConfig",
    "SceneSpec",
    "TrainConfig",
    "accuracy",
    "adaptive_label",
    "apply_transform",
    "average_confidence",
    "build_eval_sets",
    "context_label",
    "cross_entropy",
    "cross_entropy_grad",
    "draw_training_item",
    "ece",
    "generate_dataset",
    "generate_sample",
    "hard_label",
    "log_softmax",
    "mce",
    "mean_deviation",
    "objectness_analytic",
    "objectness_pixels",
    "overconfidence",
    "remove_objects",
    "report",
    "smoothing_from_objectness",
    "softmax",
    "train",
    "transformed_objectness",
    "underconfidence",
    "uniform_smooth_label",
    "__version__",
]
