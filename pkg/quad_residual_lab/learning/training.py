"""Mini-batch Adam training with a step-decay learning rate."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from ..config import TrainingConfig
from .dataset import TrainingDataset
from .features import NormStats
from .mlp import AdamState, MlpModel, adam_step, forward_normalized, mlp_backward

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "lr", "train_loss", "val_loss", "val_loss_physical"]


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


def learning_rate(epoch: int, config: TrainingConfig) -> float:
    """lr0 * factor ** floor(epoch / every)."""
    return config.learning_rate * config.decay_factor ** (epoch // config.decay_every)


def validation_split(
    count: int, fraction: float, block: int
) -> Tuple[NDArray[np.int64], NDArray[np.int64]]:
    """
    Hold out every k-th contiguous block of samples, k = round(1 / fraction).

    Sets too small to reach a held-out block lose their trailing
    ceil(fraction * count) samples instead; one sample always stays in training.
    """
    indices = np.arange(count)
    if fraction <= 0:
        return indices, indices[:0]
    period = max(2, int(round(1.0 / fraction)))
    held_out = (indices // block) % period == period - 1
    if not held_out.any():
        tail = min(count - 1, max(1, int(np.ceil(fraction * count))))
        held_out = indices >= count - tail
    return indices[~held_out], indices[held_out]


@dataclass
class TrainingResult:
    """Trained network and its per-epoch history."""

    model: MlpModel
    history: pd.DataFrame

    def save_history(self, path: Union[str, Path]) -> Path:
        """Write the history as CSV."""
        path = Path(path)
        try:
            self.history.to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise OSError(f"Cannot write training report {path}: {e}") from e
        return path


def _evaluate(
    model: MlpModel, x_hat: NDArray[np.float64], y_hat: NDArray[np.float64], y: NDArray[np.float64]
) -> Tuple[float, float]:
    if len(x_hat) == 0:
        return float("nan"), float("nan")
    output, _, _ = forward_normalized(model, x_hat)
    physical = model.stats.denormalize_outputs(output)
    return float(np.mean(np.abs(output - y_hat))), float(np.mean(np.abs(physical - y)))


def train(
    dataset: TrainingDataset,
    config: TrainingConfig,
    raw_labels: bool = False,
    layer_sizes: Optional[Sequence[int]] = None,
) -> TrainingResult:
    """
    Fit a network to the dataset labels.

    Args:
        dataset: Features and labels
        config: Architecture, schedule and seed
        raw_labels: Train on the unsmoothed labels instead
        layer_sizes: Override of the layer sizes (input and output included)

    Returns:
        TrainingResult with the model after the last epoch
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    features = dataset.features
    labels = dataset.raw_labels if raw_labels else dataset.labels
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(labels))):
        raise ValueError("dataset contains non-finite values")

    sizes = tuple(layer_sizes) if layer_sizes is not None else (
        (features.shape[1],) + tuple(config.hidden) + (labels.shape[1],)
    )
    if sizes[0] != features.shape[1] or sizes[-1] != labels.shape[1]:
        raise ValueError(f"layer sizes {sizes} do not fit data {features.shape[1]} -> {labels.shape[1]}")

    train_idx, val_idx = validation_split(len(dataset), config.validation_fraction, config.validation_block)
    stats = NormStats.from_data(features[train_idx], labels[train_idx])
    model = MlpModel.initialize(sizes, stats, config.seed, config.leaky_slope)
    optimizer = AdamState.for_model(model)
    rng = np.random.default_rng(config.seed)

    x_hat = stats.normalize_inputs(features)
    y_hat = stats.normalize_outputs(labels)
    rows = []
    logger.info(
        f"Training {sizes} on {len(train_idx)} samples ({len(val_idx)} held out), "
        f"{config.epochs} epochs"
    )
    for epoch in range(config.epochs):
        lr = learning_rate(epoch, config)
        order = rng.permutation(train_idx)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, gradients = mlp_backward(model, x_hat[batch], y_hat[batch], normalized=True)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"Non-finite loss at epoch {epoch}")
            adam_step(model, optimizer, gradients, lr)
            total += loss * len(batch)
        train_loss = total / len(order)
        val_loss, val_physical = _evaluate(model, x_hat[val_idx], y_hat[val_idx], labels[val_idx])
        rows.append((epoch, lr, train_loss, val_loss, val_physical))
        if (epoch + 1) % config.log_every == 0 or epoch == config.epochs - 1:
            logger.info(
                f"Epoch {epoch + 1}/{config.epochs}: lr={lr:.3e} train={train_loss:.5f} val={val_loss:.5f}"
            )

    if not model.is_finite():
        raise TrainingDivergedError("Model parameters became non-finite")
    return TrainingResult(model=model, history=pd.DataFrame(rows, columns=HISTORY_COLUMNS))
