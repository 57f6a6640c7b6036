"""Residual learning: labels, features, network and training."""

from .dataset import TrainingDataset, features_from_log, make_dataset
from .features import (
    FEATURE_DIM,
    FEATURE_NAMES,
    LABEL_DIM,
    LABEL_NAMES,
    NormStats,
    build_features,
    denormalize,
    normalize,
)
from .mlp import (
    DEFAULT_LAYERS,
    AdamState,
    Gradients,
    MlpModel,
    ModelFormatError,
    adam_step,
    load_model,
    mlp_backward,
    mlp_forward,
    save_model,
)
from .spline import SmoothingSpline, fit_smoothing_spline
from .training import (
    TrainingDivergedError,
    TrainingResult,
    learning_rate,
    train,
    validation_split,
)

__all__ = [
    "TrainingDataset",
    "features_from_log",
    "make_dataset",
    "FEATURE_DIM",
    "FEATURE_NAMES",
    "LABEL_DIM",
    "LABEL_NAMES",
    "NormStats",
    "build_features",
    "denormalize",
    "normalize",
    "DEFAULT_LAYERS",
    "AdamState",
    "Gradients",
    "MlpModel",
    "ModelFormatError",
    "adam_step",
    "load_model",
    "mlp_backward",
    "mlp_forward",
    "save_model",
    "SmoothingSpline",
    "fit_smoothing_spline",
    "TrainingDivergedError",
    "TrainingResult",
    "learning_rate",
    "train",
    "validation_split",
]
