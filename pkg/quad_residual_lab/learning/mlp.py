"""Leaky-ReLU multilayer perceptron with manual backpropagation and Adam."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from .features import FEATURE_DIM, LABEL_DIM, NormStats

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"QRLMLP\x00\x00"
MODEL_VERSION = 1
DEFAULT_LAYERS = (FEATURE_DIM, 24, 24, 24, LABEL_DIM)
_HEADER = struct.Struct("<8sII")


class ModelFormatError(ValueError):
    """Raised when a model file is malformed or has unexpected dimensions."""


def leaky_relu(z: NDArray[np.float64], slope: float) -> NDArray[np.float64]:
    """max(z, slope * z) for 0 <= slope < 1."""
    return np.where(z > 0, z, slope * z)


def leaky_relu_grad(z: NDArray[np.float64], slope: float) -> NDArray[np.float64]:
    """1 where z > 0, slope elsewhere."""
    return np.where(z > 0, 1.0, slope)


@dataclass
class MlpModel:
    """Weights (fan_in x fan_out), biases and the scaling statistics."""

    weights: List[NDArray[np.float64]]
    biases: List[NDArray[np.float64]]
    stats: NormStats
    leaky_slope: float = 0.01

    @classmethod
    def initialize(
        cls,
        layer_sizes: Sequence[int] = DEFAULT_LAYERS,
        stats: Optional[NormStats] = None,
        seed: int = 0,
        leaky_slope: float = 0.01,
    ) -> MlpModel:
        """Glorot-uniform weights and zero biases from a seeded generator."""
        if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
            raise ValueError(f"Invalid layer sizes: {layer_sizes}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        if stats is None:
            stats = NormStats.identity(layer_sizes[0], layer_sizes[-1])
        return cls(weights, biases, stats, leaky_slope)

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        """Input size followed by every layer's output size."""
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def parameters(self) -> List[NDArray[np.float64]]:
        """Weights and biases interleaved layer by layer."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> MlpModel:
        """Deep copy of the parameters."""
        return MlpModel(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.stats,
            self.leaky_slope,
        )

    def is_finite(self) -> bool:
        """True if every parameter is finite."""
        return all(bool(np.all(np.isfinite(p))) for p in self.parameters())


@dataclass
class Gradients:
    """Gradients with the same layout as the model parameters."""

    weights: List[NDArray[np.float64]]
    biases: List[NDArray[np.float64]]

    def parameters(self) -> List[NDArray[np.float64]]:
        """Weights and biases interleaved layer by layer."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]


def forward_normalized(
    model: MlpModel, x_hat: NDArray[np.float64]
) -> Tuple[NDArray[np.float64], List[NDArray[np.float64]], List[NDArray[np.float64]]]:
    """Network on scaled inputs; returns output, layer inputs and pre-activations."""
    activations = [x_hat]
    pre_activations = []
    h = x_hat
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre_activations.append(z)
        h = z if i == last else leaky_relu(z, model.leaky_slope)
        if i != last:
            activations.append(h)
    return h, activations, pre_activations


def mlp_forward(model: MlpModel, features: NDArray[np.float64]) -> NDArray[np.float64]:
    """Physical-unit prediction for one feature vector or a batch of them."""
    features = np.asarray(features, dtype=np.float64)
    expected = model.layer_sizes[0]
    if features.shape[-1] != expected:
        raise ValueError(f"Expected {expected} features, got {features.shape[-1]}")
    single = features.ndim == 1
    batch = features[None, :] if single else features
    output, _, _ = forward_normalized(model, model.stats.normalize_inputs(batch))
    result = model.stats.denormalize_outputs(output)
    return result[0] if single else result


def l1_loss(prediction: NDArray[np.float64], target: NDArray[np.float64]) -> float:
    """Mean absolute error over every element."""
    return float(np.mean(np.abs(prediction - target)))


def mlp_backward(
    model: MlpModel,
    features: NDArray[np.float64],
    labels: NDArray[np.float64],
    normalized: bool = False,
) -> Tuple[float, Gradients]:
    """
    Mean L1 loss in scaled output space and its gradient.

    Args:
        model: Network to differentiate
        features: (B, inputs) batch
        labels: (B, outputs) targets
        normalized: True when features and labels are already scaled

    Returns:
        Loss and gradients; the subgradient of |0| is taken as 0.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if len(features) == 0:
        raise ValueError("empty batch")
    x_hat = features if normalized else model.stats.normalize_inputs(features)
    y_hat = labels if normalized else model.stats.normalize_outputs(labels)

    output, activations, pre_activations = forward_normalized(model, x_hat)
    diff = output - y_hat
    loss = float(np.mean(np.abs(diff)))

    delta = np.sign(diff) / diff.size
    weight_grads: List[NDArray[np.float64]] = []
    bias_grads: List[NDArray[np.float64]] = []
    for i in reversed(range(len(model.weights))):
        weight_grads.append(activations[i].T @ delta)
        bias_grads.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ model.weights[i].T) * leaky_relu_grad(pre_activations[i - 1], model.leaky_slope)
    weight_grads.reverse()
    bias_grads.reverse()
    return loss, Gradients(weight_grads, bias_grads)


@dataclass
class AdamState:
    """First and second moment estimates plus the step counter."""

    first: List[NDArray[np.float64]]
    second: List[NDArray[np.float64]]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_model(cls, model: MlpModel) -> AdamState:
        """Zero moments shaped like the model."""
        params = model.parameters()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(model: MlpModel, state: AdamState, gradients: Gradients, lr: float) -> MlpModel:
    """Apply one bias-corrected Adam update in place and return the model."""
    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for param, grad, m, v in zip(model.parameters(), gradients.parameters(), state.first, state.second):
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        param -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
    return model


def save_model(model: MlpModel, path: Union[str, Path]) -> Path:
    """
    Write the model in the binary model format.

    Layout: 8-byte magic, uint32 version, uint32 layer count L, (L + 1)
    uint32 sizes, float64 leaky slope, then per layer the weights (row-major,
    fan_in x fan_out) and biases, then x_min, x_max, y_min, y_max. All
    numbers are little-endian.
    """
    path = Path(path)
    sizes = model.layer_sizes
    chunks = [
        _HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(model.weights)),
        struct.pack(f"<{len(sizes)}I", *sizes),
        struct.pack("<d", model.leaky_slope),
    ]
    for w, b in zip(model.weights, model.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    for stat in (model.stats.x_min, model.stats.x_max, model.stats.y_min, model.stats.y_max):
        chunks.append(np.ascontiguousarray(stat, dtype="<f8").tobytes())
    try:
        path.write_bytes(b"".join(chunks))
    except OSError as e:
        raise OSError(f"Cannot write model to {path}: {e}") from e
    logger.info(f"Model {sizes} written to {path}")
    return path


def load_model(path: Union[str, Path], expected_sizes: Optional[Sequence[int]] = DEFAULT_LAYERS) -> MlpModel:
    """Read a model; rejects bad magic, unknown versions and size mismatches."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: file too short")
    magic, version, layers = _HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")

    offset = _HEADER.size
    try:
        sizes = struct.unpack_from(f"<{layers + 1}I", data, offset)
        offset += 4 * (layers + 1)
        (slope,) = struct.unpack_from("<d", data, offset)
        offset += 8
    except struct.error as e:
        raise ModelFormatError(f"{path}: truncated header") from e
    if expected_sizes is not None and tuple(sizes) != tuple(expected_sizes):
        raise ModelFormatError(f"{path}: layer sizes {sizes} do not match {tuple(expected_sizes)}")

    def take(count: int) -> NDArray[np.float64]:
        nonlocal offset
        end = offset + 8 * count
        if end > len(data):
            raise ModelFormatError(f"{path}: truncated parameters")
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64)
        offset = end
        return values

    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(take(fan_in * fan_out).reshape(fan_in, fan_out))
        biases.append(take(fan_out))
    stats = NormStats(take(sizes[0]), take(sizes[0]), take(sizes[-1]), take(sizes[-1]))
    if offset != len(data):
        raise ModelFormatError(f"{path}: {len(data) - offset} trailing bytes")
    return MlpModel(weights, biases, stats, slope)
