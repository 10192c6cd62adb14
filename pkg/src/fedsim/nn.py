"""Softmax classifiers (logistic regression and ReLU MLPs) with manual backprop.

Parameters live in one flat float64 vector so that compression codecs and the
aggregation rules can treat a model as a plain vector.  The canonical layout
is, for each layer in order, the weight matrix (fan_in x fan_out, row-major)
followed by its bias vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from fedsim import seeding
from fedsim.errors import ConfigError, EmptyClientData, EvaluationError, ShapeError

# A feature penalty maps the feature matrix of a batch to (value, d value / d features).
FeaturePenalty = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class ModelArch:
    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ConfigError("need at least an input and an output layer", "layer_sizes")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {sizes}", "layer_sizes")
        object.__setattr__(self, "layer_sizes", sizes)

    @classmethod
    def logreg(cls, n_features: int, n_classes: int) -> "ModelArch":
        return cls((n_features, n_classes))

    @classmethod
    def mlp(cls, n_features: int, hidden: list[int] | tuple[int, ...], n_classes: int) -> "ModelArch":
        return cls((n_features, *hidden, n_classes))

    @property
    def n_features(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def layer_offsets(self) -> list[tuple[int, int, int]]:
        """(weight_start, bias_start, layer_end) for each layer of the flat vector."""
        out = []
        pos = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w0 = pos
            b0 = w0 + fan_in * fan_out
            pos = b0 + fan_out
            out.append((w0, b0, pos))
        return out


@dataclass
class ModelParams:
    arch: ModelArch
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size != self.arch.n_params:
            raise ShapeError(
                f"expected {self.arch.n_params} parameters for {self.arch.layer_sizes}, "
                f"got shape {self.values.shape}"
            )

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into ``values``; writes through."""
        out = []
        for (fan_in, fan_out), (w0, b0, end) in zip(
            zip(self.arch.layer_sizes[:-1], self.arch.layer_sizes[1:]), self.arch.layer_offsets()
        ):
            out.append((self.values[w0:b0].reshape(fan_in, fan_out), self.values[b0:end]))
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.values.copy())


@dataclass
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.features.shape[0] < 1:
            raise ShapeError("batch must hold at least one sample")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )


def init_model(arch: ModelArch, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = seeding.stream(seed, seeding.INIT)
    params = ModelParams(arch, np.zeros(arch.n_params))
    for W, _ in params.layers():
        fan_in, fan_out = W.shape
        a = math.sqrt(6.0 / (fan_in + fan_out))
        W[...] = rng.uniform(-a, a, size=W.shape)
    return params


def _check_input(params: ModelParams, X: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != params.arch.n_features:
        raise ShapeError(
            f"features have shape {X.shape}, model expects (*, {params.arch.n_features})"
        )


def _forward(params: ModelParams, X: np.ndarray) -> list[np.ndarray]:
    """Activations per layer; the last entry is the logits."""
    acts = [X]
    layers = params.layers()
    for i, (W, b) in enumerate(layers):
        z = acts[-1] @ W + b
        if i < len(layers) - 1:
            z = np.maximum(z, 0.0)
        acts.append(z)
    return acts


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_loss(params: ModelParams, batch: Batch) -> tuple[float, np.ndarray]:
    _check_input(params, batch.features)
    logits = _forward(params, batch.features)[-1]
    logp = _log_softmax(logits)
    loss = -logp[np.arange(len(batch.labels)), batch.labels].mean()
    return float(max(loss, 0.0)), logits


def features(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Representation used by the MMD penalty: last hidden layer, or logits for logreg."""
    _check_input(params, X)
    acts = _forward(params, X)
    return acts[-2] if params.arch.hidden_sizes else acts[-1]


def loss_and_gradient(
    params: ModelParams, batch: Batch, penalty: Optional[FeaturePenalty] = None
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy (plus optional feature penalty) and its exact gradient."""
    X, y = batch.features, batch.labels
    _check_input(params, X)
    if y.max(initial=0) >= params.arch.n_classes or y.min(initial=0) < 0:
        raise ShapeError("label out of range for the model's class count")
    acts = _forward(params, X)
    n = X.shape[0]
    logp = _log_softmax(acts[-1])
    loss = -logp[np.arange(n), y].mean()

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    layers = params.layers()
    feature_idx = len(layers) - 1 if params.arch.hidden_sizes else len(layers)
    extra_grad = None
    if penalty is not None:
        value, extra_grad = penalty(acts[feature_idx])
        loss += value
        if feature_idx == len(layers):
            delta = delta + extra_grad
            extra_grad = None

    grad = np.empty_like(params.values)
    offsets = params.arch.layer_offsets()
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        w0, b0, end = offsets[i]
        grad[w0:b0] = (acts[i].T @ delta).ravel()
        grad[b0:end] = delta.sum(axis=0)
        if i == 0:
            break
        upstream = delta @ W.T
        if extra_grad is not None and i == feature_idx:
            upstream = upstream + extra_grad
        delta = upstream * (acts[i] > 0.0)
    return float(loss), grad


def gradient(params: ModelParams, batch: Batch) -> np.ndarray:
    return loss_and_gradient(params, batch)[1]


def sgd_step(params: ModelParams, grad: np.ndarray, eta: float) -> ModelParams:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.values.shape:
        raise ShapeError(f"gradient length {grad.shape} != parameter length {params.values.shape}")
    return ModelParams(params.arch, params.values - eta * grad)


def minibatch_slices(n: int, batch_size: int) -> list[slice]:
    """ceil(n / B) consecutive slices; the last one may be short."""
    return [slice(start, min(start + batch_size, n)) for start in range(0, n, batch_size)]


def local_train(
    params: ModelParams,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    batch_size: int,
    eta: float,
    rng: np.random.Generator,
    penalty_for: Optional[Callable[[np.ndarray], FeaturePenalty]] = None,
) -> ModelParams:
    """Plain minibatch SGD on one client's data.

    Each epoch reshuffles with ``rng``.  ``penalty_for`` builds a feature
    penalty from the raw batch features (used by FedMMD).
    """
    if epochs < 1 or batch_size < 1:
        raise ConfigError("local epochs and batch size must be >= 1")
    n = len(y)
    if n == 0:
        raise EmptyClientData("client has no samples")
    values = params.values.copy()
    current = ModelParams(params.arch, values)
    for _ in range(epochs):
        order = rng.permutation(n)
        for sl in minibatch_slices(n, batch_size):
            idx = order[sl]
            batch = Batch(X[idx], y[idx])
            penalty = penalty_for(batch.features) if penalty_for is not None else None
            _, g = loss_and_gradient(current, batch, penalty)
            values -= eta * g
    return current


def predict(params: ModelParams, X: np.ndarray) -> np.ndarray:
    _check_input(params, X)
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index.
    return np.argmax(_forward(params, X)[-1], axis=1)


def evaluate(params: ModelParams, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) on a dataset."""
    if len(y) == 0:
        raise EvaluationError("cannot evaluate on an empty dataset")
    batch = Batch(X, y)
    loss, logits = forward_loss(params, batch)
    acc = float(np.mean(np.argmax(logits, axis=1) == batch.labels))
    return acc, loss
