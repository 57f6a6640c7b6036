"""Training samples built from flight logs and smoothed residual labels."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from ..flight_log import FlightLog, MisalignedStreamsError
from ..mathcore import E_Z
from .features import FEATURE_DIM, FEATURE_NAMES, LABEL_DIM, LABEL_NAMES, NormStats
from .spline import fit_smoothing_spline

logger = logging.getLogger(__name__)

RAW_LABEL_NAMES = [f"raw_{name}" for name in LABEL_NAMES]


@dataclass
class TrainingDataset:
    """Aligned features, smoothed labels and the raw labels they came from."""

    times: NDArray[np.float64]
    features: NDArray[np.float64]
    labels: NDArray[np.float64]
    raw_labels: NDArray[np.float64]
    log_ids: NDArray[np.int64]

    def __len__(self) -> int:
        return len(self.times)

    @property
    def stats(self) -> NormStats:
        """Min-max statistics over the whole set."""
        return NormStats.from_data(self.features, self.labels)

    def to_frame(self) -> pd.DataFrame:
        """Table with t, features, labels, log_id and the raw labels."""
        frame = pd.DataFrame(self.features, columns=FEATURE_NAMES)
        frame.insert(0, "t", self.times)
        frame[LABEL_NAMES] = self.labels
        frame["log_id"] = self.log_ids
        frame[RAW_LABEL_NAMES] = self.raw_labels
        return frame

    def save_csv(self, path: Union[str, Path]) -> Path:
        """Write the dataset as CSV."""
        path = Path(path)
        try:
            self.to_frame().to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise OSError(f"Cannot write dataset {path}: {e}") from e
        logger.info(f"Dataset written to {path} ({len(self)} samples)")
        return path

    @classmethod
    def load_csv(cls, path: Union[str, Path]) -> TrainingDataset:
        """Read a dataset written by save_csv()."""
        frame = pd.read_csv(path)
        missing = [c for c in ["t", *FEATURE_NAMES, *LABEL_NAMES, "log_id"] if c not in frame.columns]
        if missing:
            raise ValueError(f"Dataset {path} lacks columns: {missing}")
        labels = frame[LABEL_NAMES].to_numpy(dtype=np.float64)
        raw = (
            frame[RAW_LABEL_NAMES].to_numpy(dtype=np.float64)
            if all(c in frame.columns for c in RAW_LABEL_NAMES)
            else labels.copy()
        )
        return cls(
            times=frame["t"].to_numpy(dtype=np.float64),
            features=frame[FEATURE_NAMES].to_numpy(dtype=np.float64),
            labels=labels,
            raw_labels=raw,
            log_ids=frame["log_id"].to_numpy(dtype=np.int64),
        )

    @classmethod
    def concatenate(cls, parts: Sequence[TrainingDataset]) -> TrainingDataset:
        """Join datasets in order."""
        return cls(
            times=np.concatenate([p.times for p in parts]),
            features=np.concatenate([p.features for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            raw_labels=np.concatenate([p.raw_labels for p in parts]),
            log_ids=np.concatenate([p.log_ids for p in parts]),
        )


def features_from_log(log: FlightLog, gravity: float = 9.81) -> NDArray[np.float64]:
    """Network inputs for every tick of a log."""
    rotation = log.rotation
    acceleration = np.einsum("nij,nj->ni", rotation, log.accel_filtered) - gravity * E_Z
    features = np.column_stack(
        [
            log.velocity,
            acceleration,
            log.angular_velocity,
            rotation[:, :, 0],
            rotation[:, :, 1],
            log.pwm,
        ]
    )
    return features


def make_dataset(
    logs: Sequence[FlightLog],
    knot_spacing: float = 0.1,
    stream: str = "indi",
    settle_time: float = 0.1,
    gravity: float = 9.81,
) -> TrainingDataset:
    """
    Label every tick with the spline-smoothed residual estimate.

    Args:
        logs: Flight logs holding the estimate stream; crashed flights are skipped
        knot_spacing: Spline knot distance (s)
        stream: Residual stream used as raw label
        settle_time: Leading seconds of each log skipped while filters warm up
        gravity: Gravity used to rebuild accelerations

    Returns:
        The dataset; log_id is the position of the source log in `logs`.
    """
    parts: List[TrainingDataset] = []
    for log_id, log in enumerate(logs):
        if log.crashed:
            logger.warning(f"Skipping log {log_id}: the flight crashed after {len(log)} ticks")
            continue
        log.check_uniform()
        if stream not in log.residuals:
            raise MisalignedStreamsError(f"log {log_id} has no {stream!r} stream")
        keep = log.time >= log.time[0] + settle_time
        times = log.time[keep]
        if len(times) == 0:
            continue
        raw = log.residuals[stream][keep]
        spline = fit_smoothing_spline(times, raw, knot_spacing)
        parts.append(
            TrainingDataset(
                times=times,
                features=features_from_log(log, gravity)[keep],
                labels=spline(times),
                raw_labels=raw,
                log_ids=np.full(len(times), log_id, dtype=np.int64),
            )
        )
    if not parts:
        raise ValueError("no samples in the given logs")
    dataset = TrainingDataset.concatenate(parts)
    if dataset.features.shape[1] != FEATURE_DIM or dataset.labels.shape[1] != LABEL_DIM:
        raise MisalignedStreamsError("unexpected feature or label width")
    logger.info(f"Dataset built from {len(logs)} logs: {len(dataset)} samples")
    return dataset
