"""Differentiable local objectives: softmax regression and small ReLU MLPs.

Parameters travel as a single flat float64 vector; ``ModelSpec`` carries the
layer sizes needed to unflatten them. Losses are mean cross-entropy over a
worker's samples, gradients are computed by hand-rolled backprop. Everything
here is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix (n, d) with integer class labels for one worker."""

    features: np.ndarray
    labels: np.ndarray
    worker_id: int = 0

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise InputError("features must be a nonempty (n, d) matrix")
        if labels.shape != (feats.shape[0],):
            raise InputError("labels must be one integer per sample")
        if not np.all(np.isfinite(feats)):
            raise InputError("features contain non-finite values")
        if np.any(labels < 0):
            raise InputError("labels must be nonnegative class ids")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor: logistic = one affine layer, mlp = ReLU stack."""

    kind: str
    input_dim: int
    classes: int
    hidden: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.kind not in ("logistic", "mlp"):
            raise InputError(f"unknown model kind {self.kind!r}")
        if self.kind == "logistic" and self.hidden:
            raise InputError("logistic model takes no hidden layers")
        if self.kind == "mlp" and not self.hidden:
            raise InputError("mlp model needs at least one hidden layer")
        if self.classes < 2:
            raise InputError("need at least two classes")
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise InputError("layer sizes must be positive")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(out, in) pairs for every affine layer, input to output."""
        sizes = (self.input_dim, *self.hidden, self.classes)
        return [(sizes[i + 1], sizes[i]) for i in range(len(sizes) - 1)]

    @property
    def param_count(self) -> int:
        return sum(o * i + o for o, i in self.layer_dims())


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector paired with the spec that shapes it."""

    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.spec.param_count,):
            raise InputError(
                f"expected {self.spec.param_count} parameters, got {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise InputError("parameters contain non-finite values")
        object.__setattr__(self, "values", vals)


def unflatten(values: np.ndarray, spec: ModelSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into (W, b) pairs per layer."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (spec.param_count,):
        raise InputError(
            f"parameter vector has length {values.shape}, spec wants {spec.param_count}"
        )
    layers = []
    pos = 0
    for out, inp in spec.layer_dims():
        w = values[pos : pos + out * inp].reshape(out, inp)
        pos += out * inp
        b = values[pos : pos + out]
        pos += out
        layers.append((w, b))
    return layers


def init_params(spec: ModelSpec, rng: np.random.Generator, scale: float = 0.1) -> np.ndarray:
    return scale * rng.standard_normal(spec.param_count)


def softmax_cross_entropy(logits: np.ndarray, label: int) -> float:
    """Stabilized -log softmax(logits)[label]."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise InputError("logits must be a vector over >= 2 classes")
    if not np.all(np.isfinite(logits)):
        raise InputError("logits must be finite")
    if not 0 <= int(label) < logits.shape[0]:
        raise InputError(f"label {label} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[int(label)])


def _forward(values, spec, x):
    """Returns (logits, activations); activations[i] feeds affine layer i."""
    layers = unflatten(values, spec)
    acts = [x]
    for i, (w, b) in enumerate(layers):
        z = acts[-1] @ w.T + b
        if i < len(layers) - 1:
            z = np.maximum(z, 0.0)  # ReLU; subgradient at 0 taken as 0
        acts.append(z)
    return acts[-1], acts[:-1]


def _check_data(spec, data):
    if data.n_features != spec.input_dim:
        raise InputError(
            f"dataset has {data.n_features} features, spec wants {spec.input_dim}"
        )
    if data.labels.max() >= spec.classes:
        raise InputError("label id exceeds class count")


def _resolve_batch(data, batch):
    if batch is None:
        return np.arange(data.n_samples)
    idx = np.asarray(batch, dtype=np.int64)
    if idx.size == 0:
        raise InputError("batch must be nonempty")
    if idx.min() < 0 or idx.max() >= data.n_samples:
        raise InputError("batch index out of range")
    return idx


def local_loss(values, spec: ModelSpec, data: LabeledDataset, batch=None) -> float:
    """Mean cross-entropy over the (mini-)batch."""
    _check_data(spec, data)
    idx = _resolve_batch(data, batch)
    logits, _ = _forward(values, spec, data.features[idx])
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(lse - shifted[np.arange(idx.size), data.labels[idx]]))


def local_grad(values, spec: ModelSpec, data: LabeledDataset, batch=None) -> np.ndarray:
    """Analytic gradient of the (mini-)batch mean loss, flat layout."""
    _check_data(spec, data)
    idx = _resolve_batch(data, batch)
    x, y = data.features[idx], data.labels[idx]
    logits, acts = _forward(values, spec, x)
    layers = unflatten(values, spec)

    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    probs = expv / expv.sum(axis=1, keepdims=True)
    delta = probs
    delta[np.arange(idx.size), y] -= 1.0
    delta /= idx.size

    grad = np.zeros_like(np.asarray(values, dtype=np.float64))
    pos = grad.size
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        out, inp = w.shape
        gb = delta.sum(axis=0)
        gw = delta.T @ acts[i]
        pos -= out
        grad[pos : pos + out] = gb
        pos -= out * inp
        grad[pos : pos + out * inp] = gw.ravel()
        if i > 0:
            delta = (delta @ w) * (acts[i] > 0)
    return grad


def predict(values, spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    """Argmax class ids for a feature matrix."""
    logits, _ = _forward(values, spec, np.asarray(features, dtype=np.float64))
    return logits.argmax(axis=1)


def accuracy(values, spec: ModelSpec, data: LabeledDataset) -> float:
    return float(np.mean(predict(values, spec, data.features) == data.labels))


def sample_batch(n: int, m: int, rng) -> np.ndarray:
    """m distinct indices drawn uniformly without replacement.

    ``rng`` is either a seed or a Generator; a fixed seed reproduces the draw.
    """
    if not 1 <= m <= n:
        raise InputError(f"batch size {m} not in [1, {n}]")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return rng.choice(n, size=m, replace=False)
