"""Flat-parameter model family: multinomial logistic regression and a
one-hidden-layer perceptron, with exact analytic gradients and
SGD-with-momentum training.

All operations are pure functions of their inputs (including seeds);
parameter vectors are immutable once created.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .seeds import rng_from


class Architecture(str, Enum):
    LINEAR = "linear"
    MLP1 = "mlp1"


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"


ShapeSpec = tuple[tuple[str, tuple[int, ...]], ...]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; the parameter count is derived, never stored."""

    architecture: Architecture
    input_dim: int
    num_classes: int
    hidden_dim: int = 0
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.architecture is Architecture.MLP1 and self.hidden_dim < 1:
            raise ValueError("mlp1 requires hidden_dim >= 1")
        if self.architecture is Architecture.LINEAR and self.hidden_dim != 0:
            raise ValueError("linear model must have hidden_dim == 0")

    @property
    def shape_spec(self) -> ShapeSpec:
        if self.architecture is Architecture.LINEAR:
            return (
                ("w", (self.input_dim, self.num_classes)),
                ("b", (self.num_classes,)),
            )
        return (
            ("w1", (self.input_dim, self.hidden_dim)),
            ("b1", (self.hidden_dim,)),
            ("w2", (self.hidden_dim, self.num_classes)),
            ("b2", (self.num_classes,)),
        )

    @property
    def num_params(self) -> int:
        return sum(int(np.prod(dims)) for _, dims in self.shape_spec)


@dataclass(frozen=True)
class ParameterVector:
    """Flat float64 parameter vector plus the layer layout that partitions it."""

    values: np.ndarray
    shape_spec: ShapeSpec

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        expected = sum(int(np.prod(dims)) for _, dims in self.shape_spec)
        if values.ndim != 1 or values.size != expected:
            raise ValueError(
                f"parameter vector has shape {values.shape}, expected ({expected},)"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter vector contains NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.size

    def view(self, name: str) -> np.ndarray:
        """Read-only view of one named layer, reshaped to its declared dims."""
        offset = 0
        for layer, dims in self.shape_spec:
            size = int(np.prod(dims))
            if layer == name:
                return self.values[offset : offset + size].reshape(dims)
            offset += size
        raise KeyError(f"no layer named {name!r}")

    def replace(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(values, self.shape_spec)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    momentum: float = 0.0
    batch_size: int = 32
    local_epochs: int = 1

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        # 0 epochs is the degenerate no-op; negatives are config errors
        if self.local_epochs < 0:
            raise ValueError(f"local_epochs must be >= 0, got {self.local_epochs}")


def init_parameters(spec: ModelSpec, seed: int) -> ParameterVector:
    """Glorot-uniform weights (a = sqrt(6 / (fan_in + fan_out))), zero biases."""
    rng = rng_from(seed)
    parts = []
    for _, dims in spec.shape_spec:
        if len(dims) == 2:
            fan_in, fan_out = dims
            a = math.sqrt(6.0 / (fan_in + fan_out))
            parts.append(rng.uniform(-a, a, size=fan_in * fan_out))
        else:
            parts.append(np.zeros(dims[0]))
    return ParameterVector(np.concatenate(parts), spec.shape_spec)


def zeros_like(spec: ModelSpec) -> ParameterVector:
    return ParameterVector(np.zeros(spec.num_params), spec.shape_spec)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, a: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


def _forward_batch(
    theta: ParameterVector, spec: ModelSpec, X: np.ndarray
) -> tuple[np.ndarray, dict]:
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(
            f"feature batch has shape {X.shape}, expected (n, {spec.input_dim})"
        )
    if spec.architecture is Architecture.LINEAR:
        logits = X @ theta.view("w") + theta.view("b")
        return _softmax(logits), {}
    z1 = X @ theta.view("w1") + theta.view("b1")
    a1 = _activate(z1, spec.activation)
    logits = a1 @ theta.view("w2") + theta.view("b2")
    return _softmax(logits), {"z1": z1, "a1": a1}


def predict_proba(theta: ParameterVector, spec: ModelSpec, X: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch of feature rows; rows sum to 1."""
    probs, _ = _forward_batch(theta, spec, np.asarray(X, dtype=np.float64))
    return probs


def forward(theta: ParameterVector, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({spec.input_dim},)")
    return predict_proba(theta, spec, x[None, :])[0]


def _check_batch(spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("batch is empty")
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError(f"feature/label shapes mismatch: {X.shape} vs {y.shape}")
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise ValueError(f"labels must lie in [0, {spec.num_classes})")
    return X, y


def cross_entropy_loss(
    theta: ParameterVector, spec: ModelSpec, X: np.ndarray, y: np.ndarray
) -> float:
    """Mean cross-entropy of the batch, without the gradient."""
    X, y = _check_batch(spec, X, y)
    probs, _ = _forward_batch(theta, spec, X)
    return float(-np.mean(np.log(probs[np.arange(len(y)), y])))


def loss_and_gradient(
    theta: ParameterVector, spec: ModelSpec, X: np.ndarray, y: np.ndarray
) -> tuple[float, ParameterVector]:
    """Mean cross-entropy over the batch and its exact gradient w.r.t. theta.

    The gradient is the analytic derivative of the returned loss, flattened
    in the same layer order as the parameter vector.
    """
    X, y = _check_batch(spec, X, y)
    n = len(y)
    probs, cache = _forward_batch(theta, spec, X)
    loss = float(-np.mean(np.log(probs[np.arange(n), y])))

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    if spec.architecture is Architecture.LINEAR:
        gw = X.T @ dlogits
        gb = dlogits.sum(axis=0)
        grad = np.concatenate([gw.ravel(), gb])
    else:
        a1 = cache["a1"]
        gw2 = a1.T @ dlogits
        gb2 = dlogits.sum(axis=0)
        da1 = dlogits @ theta.view("w2").T
        dz1 = da1 * _activate_grad(cache["z1"], a1, spec.activation)
        gw1 = X.T @ dz1
        gb1 = dz1.sum(axis=0)
        grad = np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])
    return loss, ParameterVector(grad, spec.shape_spec)


def sgd_step(
    theta: ParameterVector,
    grad: ParameterVector,
    velocity: ParameterVector,
    cfg: OptimizerConfig,
) -> tuple[ParameterVector, ParameterVector]:
    """One heavy-ball update: v' = momentum * v + g, theta' = theta - lr * v'."""
    if not (theta.dim == grad.dim == velocity.dim):
        raise ValueError("theta, grad and velocity must share one dimension")
    v_new = cfg.momentum * velocity.values + grad.values
    theta_new = theta.values - cfg.learning_rate * v_new
    return theta.replace(theta_new), velocity.replace(v_new)


def local_train(
    theta: ParameterVector,
    spec: ModelSpec,
    X: np.ndarray,
    y: np.ndarray,
    cfg: OptimizerConfig,
    seed: int,
) -> ParameterVector:
    """Mini-batch SGD for cfg.local_epochs passes over (X, y).

    Batches come from a seeded shuffle per epoch; the last short batch is
    kept. The momentum buffer starts at zero for every call, so velocity
    never leaks across federated rounds.
    """
    X, y = _check_batch(spec, X, y)
    n = len(y)
    rng = rng_from(seed)
    velocity = zeros_like(spec)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grad = loss_and_gradient(theta, spec, X[idx], y[idx])
            theta, velocity = sgd_step(theta, grad, velocity, cfg)
    return theta
