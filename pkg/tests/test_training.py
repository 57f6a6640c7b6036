"""Tests for network training."""

import numpy as np
import pandas as pd
import pytest

from quad_residual_lab.config import TrainingConfig
from quad_residual_lab.learning import (
    FEATURE_DIM,
    LABEL_DIM,
    TrainingDataset,
    learning_rate,
    mlp_forward,
    train,
    validation_split,
)
from quad_residual_lab.learning.training import HISTORY_COLUMNS


def _linear_dataset(count, seed=0):
    gen = np.random.default_rng(seed)
    features = gen.uniform(-1.0, 1.0, size=(count, FEATURE_DIM))
    weights = gen.normal(0.0, 0.3, size=(FEATURE_DIM, LABEL_DIM))
    labels = features @ weights
    return TrainingDataset(
        times=np.arange(count) * 0.002,
        features=features,
        labels=labels,
        raw_labels=labels + 0.01 * gen.standard_normal(labels.shape),
        log_ids=np.zeros(count, dtype=np.int64),
    )


@pytest.fixture
def quick_training():
    """Two short epochs."""
    return TrainingConfig(epochs=2, batch_size=64, validation_block=50, log_every=1)


class TestSchedule:
    """Test learning_rate() and validation_split()."""

    def test_step_decay(self):
        """The rate drops by the decay factor every decay_every epochs."""
        config = TrainingConfig(learning_rate=1e-3, decay_factor=0.5, decay_every=10)
        assert learning_rate(0, config) == pytest.approx(1e-3)
        assert learning_rate(9, config) == pytest.approx(1e-3)
        assert learning_rate(10, config) == pytest.approx(5e-4)
        assert learning_rate(25, config) == pytest.approx(2.5e-4)

    def test_block_split(self):
        """Every tenth block of contiguous samples is held out."""
        train_idx, val_idx = validation_split(1000, 0.1, 10)
        assert len(val_idx) == 100
        assert len(train_idx) == 900
        np.testing.assert_array_equal(val_idx[:10], np.arange(90, 100))
        assert not set(train_idx.tolist()) & set(val_idx.tolist())

    def test_no_validation(self):
        """A zero fraction keeps every sample for training."""
        train_idx, val_idx = validation_split(100, 0.0, 10)
        assert len(train_idx) == 100
        assert len(val_idx) == 0

    def test_tiny_set_keeps_training_data(self):
        """Sets smaller than one period hold out their trailing samples instead."""
        train_idx, val_idx = validation_split(20, 0.1, 50)
        np.testing.assert_array_equal(train_idx, np.arange(18))
        np.testing.assert_array_equal(val_idx, np.array([18, 19]))

    def test_tail_rounds_up(self):
        """The trailing hold-out is at least one sample and never the whole set."""
        _, val_idx = validation_split(5, 0.1, 500)
        np.testing.assert_array_equal(val_idx, np.array([4]))
        train_idx, val_idx = validation_split(1, 0.5, 500)
        assert len(train_idx) == 1
        assert len(val_idx) == 0


class TestTrain:
    """Test train()."""

    def test_history(self, quick_training):
        """One history row per epoch with the configured rates."""
        result = train(_linear_dataset(500), quick_training)
        assert list(result.history.columns) == HISTORY_COLUMNS
        assert result.history["epoch"].tolist() == [0, 1]
        assert np.all(np.isfinite(result.history["val_loss"]))
        assert result.model.layer_sizes == (FEATURE_DIM, 24, 24, 24, LABEL_DIM)

    def test_seeded(self, quick_training):
        """The same seed trains the same network."""
        dataset = _linear_dataset(300)
        a = train(dataset, quick_training).model
        b = train(dataset, quick_training).model
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_raw_labels(self, quick_training):
        """Training on raw labels scales outputs to the raw label range of the training rows."""
        dataset = _linear_dataset(300)
        result = train(dataset, quick_training, raw_labels=True)
        fraction, block = quick_training.validation_fraction, quick_training.validation_block
        train_idx, _ = validation_split(300, fraction, block)
        np.testing.assert_array_equal(result.model.stats.y_max, dataset.raw_labels[train_idx].max(axis=0))

    def test_scaling_ignores_held_out_rows(self, quick_training):
        """Extreme values in the held-out block do not move the scaling."""
        dataset = _linear_dataset(500)
        dataset.features[460] = 50.0
        dataset.labels[460] = -50.0
        result = train(dataset, quick_training)
        assert np.all(result.model.stats.x_max <= 1.0)
        assert np.all(result.model.stats.y_min > -50.0)

    def test_small_set_has_validation_loss(self, quick_training):
        """A set smaller than one hold-out period still reports a finite validation loss."""
        result = train(_linear_dataset(300), quick_training)
        assert np.all(np.isfinite(result.history["val_loss"]))

    def test_custom_layers(self, quick_training):
        """Layer sizes can be overridden but must fit the data."""
        dataset = _linear_dataset(200)
        result = train(dataset, quick_training, layer_sizes=(FEATURE_DIM, 8, LABEL_DIM))
        assert result.model.layer_sizes == (FEATURE_DIM, 8, LABEL_DIM)
        with pytest.raises(ValueError, match="do not fit"):
            train(dataset, quick_training, layer_sizes=(FEATURE_DIM, 8, 3))

    def test_rejects_bad_data(self, quick_training):
        """Empty and non-finite datasets are refused."""
        dataset = _linear_dataset(100)
        empty = TrainingDataset(
            dataset.times[:0],
            dataset.features[:0],
            dataset.labels[:0],
            dataset.raw_labels[:0],
            dataset.log_ids[:0],
        )
        with pytest.raises(ValueError, match="empty"):
            train(empty, quick_training)
        dataset.features[3, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            train(dataset, quick_training)

    def test_save_history(self, quick_training, tmp_path):
        """The history is written as CSV."""
        result = train(_linear_dataset(200), quick_training)
        path = result.save_history(tmp_path / "training.csv")
        assert pd.read_csv(path).shape == (2, len(HISTORY_COLUMNS))

    @pytest.mark.slow
    def test_learns_linear_map(self):
        """A linear residual map is learned to a small fraction of the label spread."""
        dataset = _linear_dataset(4096, seed=1)
        config = TrainingConfig(
            epochs=100, batch_size=128, learning_rate=3e-3, validation_block=64, log_every=25
        )
        result = train(dataset, config)
        _, val_idx = validation_split(len(dataset), config.validation_fraction, config.validation_block)
        prediction = mlp_forward(result.model, dataset.features[val_idx])
        truth = dataset.labels[val_idx]
        spread = np.mean(np.abs(truth - np.median(truth, axis=0)))
        assert np.mean(np.abs(prediction - truth)) < 0.2 * spread
