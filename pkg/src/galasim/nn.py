"""Minimal dense neural-network engine.

Flat parameter vectors, an MLP feature extractor with ReLU, a linear-softmax
classifier, analytic gradients via manual backpropagation, SGD with momentum
and weight decay, a step learning-rate schedule, and a central finite
difference gradient checker.

Everything here is a pure function over value types; all math is float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericError

ShapeSpec = tuple[tuple[str, tuple[int, ...]], ...]


def _spec_size(shape_spec: ShapeSpec) -> int:
    return sum(int(np.prod(dims)) for _, dims in shape_spec)


@dataclass
class ParamVec:
    """Flat parameter vector plus the layer layout it flattens.

    Two ParamVecs with the same shape_spec are element-wise combinable;
    `unpack` exposes per-layer views into the flat buffer (no copies).
    """

    values: np.ndarray
    shape_spec: ShapeSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("ParamVec values must be one-dimensional")
        if self.values.size != _spec_size(self.shape_spec):
            raise ValueError(
                f"ParamVec length {self.values.size} does not match shape_spec "
                f"total {_spec_size(self.shape_spec)}"
            )

    @classmethod
    def zeros(cls, shape_spec: ShapeSpec) -> "ParamVec":
        return cls(np.zeros(_spec_size(shape_spec)), shape_spec)

    def zeros_like(self) -> "ParamVec":
        return ParamVec.zeros(self.shape_spec)

    def copy(self) -> "ParamVec":
        return ParamVec(self.values.copy(), self.shape_spec)

    def unpack(self) -> dict[str, np.ndarray]:
        """Views of each layer block, reshaped; mutating them mutates the vector."""
        out = {}
        offset = 0
        for name, dims in self.shape_spec:
            size = int(np.prod(dims))
            out[name] = self.values[offset : offset + size].reshape(dims)
            offset += size
        return out

    def _check_compatible(self, other: "ParamVec") -> None:
        if self.shape_spec != other.shape_spec:
            raise ValueError("ParamVec shape_specs differ; not combinable")

    def add(self, other: "ParamVec") -> "ParamVec":
        self._check_compatible(other)
        return ParamVec(self.values + other.values, self.shape_spec)

    def scale(self, factor: float) -> "ParamVec":
        return ParamVec(self.values * float(factor), self.shape_spec)

    def __add__(self, other: "ParamVec") -> "ParamVec":
        return self.add(other)

    def __sub__(self, other: "ParamVec") -> "ParamVec":
        self._check_compatible(other)
        return ParamVec(self.values - other.values, self.shape_spec)

    def __mul__(self, factor: float) -> "ParamVec":
        return self.scale(factor)

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    @property
    def size(self) -> int:
        return self.values.size


def weighted_mean(vecs: Sequence[ParamVec], weights: Sequence[float]) -> ParamVec:
    """Sum_n weights[n] * vecs[n]; all vecs must share one shape_spec."""
    if len(vecs) == 0:
        raise ValueError("weighted_mean needs at least one ParamVec")
    if len(vecs) != len(weights):
        raise ValueError("weights length must match number of ParamVecs")
    spec = vecs[0].shape_spec
    acc = np.zeros(vecs[0].size)
    for v, w in zip(vecs, weights):
        if v.shape_spec != spec:
            raise ValueError("ParamVec shape_specs differ; not combinable")
        acc += float(w) * v.values
    return ParamVec(acc, spec)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; invariant to adding a constant to all logits."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _glorot_init(shape_spec: ShapeSpec, rng: np.random.Generator) -> ParamVec:
    # weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero
    pv = ParamVec.zeros(shape_spec)
    blocks = pv.unpack()
    for name, dims in shape_spec:
        if len(dims) == 2:
            fan_out, fan_in = dims
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            blocks[name][...] = rng.uniform(-limit, limit, size=dims)
    return pv


@dataclass
class FeatureExtractor:
    """MLP mapping inputs to a nonnegative feature vector (ReLU after every layer)."""

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int
    params: ParamVec

    @staticmethod
    def shape_spec(input_dim, hidden_dims, output_dim) -> ShapeSpec:
        spec = []
        dims = [input_dim, *hidden_dims, output_dim]
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            spec.append((f"w{i}", (fan_out, fan_in)))
            spec.append((f"b{i}", (fan_out,)))
        return tuple(spec)

    @classmethod
    def init(cls, input_dim, hidden_dims, output_dim, rng: np.random.Generator):
        hidden_dims = tuple(int(h) for h in hidden_dims)
        spec = cls.shape_spec(input_dim, hidden_dims, output_dim)
        return cls(int(input_dim), hidden_dims, int(output_dim), _glorot_init(spec, rng))

    @property
    def n_layers(self) -> int:
        return len(self.hidden_dims) + 1

    def with_params(self, params: ParamVec) -> "FeatureExtractor":
        return FeatureExtractor(self.input_dim, self.hidden_dims, self.output_dim, params)

    def forward_trace(self, x: np.ndarray):
        """Forward pass keeping every activation for backprop.

        Returns (activations, preacts): activations[0] is the input batch,
        activations[-1] the features; preacts[l] is the pre-ReLU value of
        layer l.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ConfigError(
                f"input dim {x.shape[1]} does not match extractor input_dim {self.input_dim}"
            )
        blocks = self.params.unpack()
        acts = [x]
        preacts = []
        for i in range(self.n_layers):
            z = acts[-1] @ blocks[f"w{i}"].T + blocks[f"b{i}"]
            preacts.append(z)
            acts.append(np.maximum(z, 0.0))
        return acts, preacts

    def forward(self, x: np.ndarray) -> np.ndarray:
        squeeze = np.asarray(x).ndim == 1
        features = self.forward_trace(x)[0][-1]
        return features[0] if squeeze else features

    def backprop(self, acts, preacts, dfeatures: np.ndarray) -> ParamVec:
        """Gradient of a scalar loss w.r.t. params given d(loss)/d(features)."""
        blocks = self.params.unpack()
        grad = self.params.zeros_like()
        gblocks = grad.unpack()
        delta = dfeatures
        for i in reversed(range(self.n_layers)):
            delta = delta * (preacts[i] > 0.0)  # ReLU subgradient, 0 at the kink
            gblocks[f"w{i}"][...] = delta.T @ acts[i]
            gblocks[f"b{i}"][...] = delta.sum(axis=0)
            delta = delta @ blocks[f"w{i}"]
        return grad


@dataclass
class Classifier:
    """Linear layer followed by softmax; maps features to a probability vector."""

    input_dim: int
    num_classes: int
    params: ParamVec

    @staticmethod
    def shape_spec(input_dim, num_classes) -> ShapeSpec:
        return (("w", (num_classes, input_dim)), ("b", (num_classes,)))

    @classmethod
    def init(cls, input_dim, num_classes, rng: np.random.Generator):
        if num_classes < 2:
            raise ConfigError("classifier needs at least 2 classes")
        spec = cls.shape_spec(input_dim, num_classes)
        return cls(int(input_dim), int(num_classes), _glorot_init(spec, rng))

    def with_params(self, params: ParamVec) -> "Classifier":
        return Classifier(self.input_dim, self.num_classes, params)

    def logits(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.input_dim:
            raise ConfigError(
                f"feature dim {z.shape[1]} does not match classifier input_dim {self.input_dim}"
            )
        blocks = self.params.unpack()
        return z @ blocks["w"].T + blocks["b"]

    def forward(self, z: np.ndarray) -> np.ndarray:
        squeeze = np.asarray(z).ndim == 1
        probs = softmax(self.logits(z))
        return probs[0] if squeeze else probs


@dataclass
class OptimizerState:
    """SGD-with-momentum state for one ParamVec.

    step: buffer <- momentum*buffer + grad + weight_decay*params,
          params <- params - lr*buffer.
    """

    momentum_buffer: ParamVec
    lr0: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    step_count: int = 0

    @classmethod
    def for_params(cls, params: ParamVec, lr0, momentum=0.9, weight_decay=0.0):
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")
        return cls(params.zeros_like(), float(lr0), float(momentum), float(weight_decay))


def forward_model(extractor: FeatureExtractor, classifier: Classifier, x: np.ndarray) -> np.ndarray:
    """Probability vector(s) of the composed model classifier(extractor(x))."""
    if extractor.output_dim != classifier.input_dim:
        raise ConfigError(
            f"extractor output_dim {extractor.output_dim} does not match "
            f"classifier input_dim {classifier.input_dim}"
        )
    return classifier.forward(extractor.forward(x))


def _as_soft_targets(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(np.float64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(
            f"label out of range [0, {num_classes}): "
            f"min={labels.min()}, max={labels.max()}"
        )
    onehot = np.zeros((labels.size, num_classes))
    onehot[np.arange(labels.size), labels.astype(int)] = 1.0
    return onehot


def cross_entropy_grad(extractor: FeatureExtractor, classifier: Classifier,
                       x: np.ndarray, labels) -> tuple[float, ParamVec, ParamVec]:
    """Mean cross-entropy over the batch and its exact analytic gradients.

    `labels` is either an int array of class indices or a (batch, C) matrix of
    soft targets whose rows sum to 1 (mixup). Returns (loss, gradG, gradF).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("cross_entropy_grad: empty batch")
    targets = _as_soft_targets(labels, classifier.num_classes)
    if targets.shape[0] != x.shape[0]:
        raise DataError("labels length does not match batch size")

    acts, preacts = extractor.forward_trace(x)
    features = acts[-1]
    logits = classifier.logits(features)
    # log-softmax with max subtraction keeps -log p exact for tiny p
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(log_probs)
    batch = x.shape[0]
    loss = float(-(targets * log_probs).sum() / batch)

    dlogits = (probs - targets) / batch
    grad_f = classifier.params.zeros_like()
    gfb = grad_f.unpack()
    gfb["w"][...] = dlogits.T @ features
    gfb["b"][...] = dlogits.sum(axis=0)
    dfeatures = dlogits @ classifier.params.unpack()["w"]
    grad_g = extractor.backprop(acts, preacts, dfeatures)
    return loss, grad_g, grad_f


def sgd_step(params: ParamVec, grad: ParamVec, state: OptimizerState, lr: float) -> ParamVec:
    """One SGD-with-momentum step; mutates `state`, returns the new params."""
    if not grad.is_finite():
        raise NumericError("non-finite gradient in sgd_step")
    params._check_compatible(grad)
    params._check_compatible(state.momentum_buffer)
    buf = state.momentum_buffer.values
    buf *= state.momentum
    buf += grad.values + state.weight_decay * params.values
    state.step_count += 1
    new = ParamVec(params.values - lr * buf, params.shape_spec)
    if not new.is_finite():
        raise NumericError("non-finite parameters after sgd_step")
    return new


def lr_schedule(lr0: float, round_index: int, gamma: float = 0.75) -> float:
    """Step decay: lr0 * gamma^(round_index // 100). Nonincreasing in the round."""
    if round_index < 0:
        raise ValueError("round_index must be nonnegative")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must be in (0, 1]")
    return float(lr0) * float(gamma) ** (round_index // 100)


def finite_difference_grad(loss_fn: Callable[[ParamVec], float], params: ParamVec,
                           epsilon: float) -> ParamVec:
    """Central finite differences of a scalar loss w.r.t. every coordinate."""
    grad = params.zeros_like()
    base = params.values
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] = base[i] + epsilon
        up = loss_fn(ParamVec(bumped, params.shape_spec))
        bumped[i] = base[i] - epsilon
        down = loss_fn(ParamVec(bumped, params.shape_spec))
        grad.values[i] = (up - down) / (2.0 * epsilon)
    return grad


def relative_grad_error(analytic: ParamVec, numeric: ParamVec) -> float:
    """Max per-coordinate discrepancy, relative to the finite-difference value;
    absolute where the analytic coordinate is below 1e-8."""
    a = analytic.values
    n = numeric.values
    diff = np.abs(a - n)
    small = np.abs(a) < 1e-8
    rel = diff / np.maximum(np.abs(n), 1e-300)
    return float(np.max(np.where(small, diff, rel))) if a.size else 0.0


def grad_check(extractor: FeatureExtractor, classifier: Classifier,
               x: np.ndarray, labels, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and finite-difference CE gradients."""
    if not 1e-7 < epsilon < 1e-3:
        raise ValueError("epsilon must lie in (1e-7, 1e-3)")
    _, grad_g, grad_f = cross_entropy_grad(extractor, classifier, x, labels)

    def loss_g(pv: ParamVec) -> float:
        return cross_entropy_grad(extractor.with_params(pv), classifier, x, labels)[0]

    def loss_f(pv: ParamVec) -> float:
        return cross_entropy_grad(extractor, classifier.with_params(pv), x, labels)[0]

    num_g = finite_difference_grad(loss_g, extractor.params, epsilon)
    num_f = finite_difference_grad(loss_f, classifier.params, epsilon)
    return max(relative_grad_error(grad_g, num_g), relative_grad_error(grad_f, num_f))
