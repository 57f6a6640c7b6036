"""Network inputs and min-max scaling."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..dynamics import SensorFrame, VehicleState
from ..mathcore import E_Z, Vec3

logger = logging.getLogger(__name__)

FEATURE_NAMES = [
    "vx", "vy", "vz",
    "dvx", "dvy", "dvz",
    "wx", "wy", "wz",
    "r00", "r10", "r20",
    "r01", "r11", "r21",
    "pwm1", "pwm2", "pwm3", "pwm4",
]  # fmt: skip
LABEL_NAMES = ["fax", "fay", "faz", "tax", "tay", "taz"]

FEATURE_DIM = len(FEATURE_NAMES)
LABEL_DIM = len(LABEL_NAMES)


def build_features(
    state: VehicleState,
    frame: SensorFrame,
    accel_filtered: Optional[Vec3] = None,
    gravity: float = 9.81,
) -> NDArray[np.float64]:
    """
    Stack [v, v_dot, w, R[:, 0], R[:, 1], pwm] into the 19 network inputs.

    v_dot is R @ accel - g e_z using the filtered accelerometer when given.
    """
    accel = frame.accel if accel_filtered is None else accel_filtered
    rotation = state.rotation
    acceleration = rotation @ accel - gravity * E_Z
    return np.concatenate(
        [
            state.velocity,
            acceleration,
            state.angular_velocity,
            rotation[:, 0],
            rotation[:, 1],
            np.asarray(frame.pwm, dtype=np.float64),
        ]
    )


def normalize(x: NDArray[np.float64], lo: NDArray[np.float64], hi: NDArray[np.float64]) -> NDArray[np.float64]:
    """Map [lo, hi] affinely onto [-1, 1]; constant dimensions map to 0."""
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = 2.0 * (np.asarray(x, dtype=np.float64) - lo) / safe - 1.0
    return np.where(span > 0, scaled, 0.0)


def denormalize(y: NDArray[np.float64], lo: NDArray[np.float64], hi: NDArray[np.float64]) -> NDArray[np.float64]:
    """Inverse of normalize(); constant dimensions return lo."""
    span = hi - lo
    return lo + 0.5 * (np.asarray(y, dtype=np.float64) + 1.0) * span


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-dimension extrema of the training inputs and outputs."""

    x_min: NDArray[np.float64]
    x_max: NDArray[np.float64]
    y_min: NDArray[np.float64]
    y_max: NDArray[np.float64]

    @classmethod
    def from_data(cls, features: NDArray[np.float64], labels: NDArray[np.float64]) -> NormStats:
        """Extrema over a training set."""
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        if len(features) == 0:
            raise ValueError("cannot compute normalisation statistics of an empty set")
        stats = cls(features.min(axis=0), features.max(axis=0), labels.min(axis=0), labels.max(axis=0))
        constant = np.flatnonzero(stats.x_max <= stats.x_min)
        if len(constant):
            logger.warning(f"Constant input dimensions mapped to 0: {constant.tolist()}")
        return stats

    @classmethod
    def identity(cls, inputs: int, outputs: int) -> NormStats:
        """Statistics that leave [-1, 1] data unchanged."""
        return cls(-np.ones(inputs), np.ones(inputs), -np.ones(outputs), np.ones(outputs))

    @property
    def constant_inputs(self) -> NDArray[np.bool_]:
        """Mask of input dimensions without spread."""
        return self.x_max <= self.x_min

    def normalize_inputs(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Scale features."""
        return normalize(x, self.x_min, self.x_max)

    def normalize_outputs(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        """Scale labels."""
        return normalize(y, self.y_min, self.y_max)

    def denormalize_outputs(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        """Unscale network outputs."""
        return denormalize(y, self.y_min, self.y_max)
