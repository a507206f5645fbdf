"""Small differentiable objectives with analytic gradients (and Hessians).

Three model kinds cover the verification needs of the simulator:

* ``quadratic`` -- convex quadratic with a diagonal-plus-low-rank curvature;
  its gradient is exactly linear in the weights, so first-order gradient
  correction is exact and isolates the protocol logic from approximation
  error.
* ``logistic_regression`` -- multinomial softmax classifier with an analytic
  Hessian-vector product.
* ``mlp`` -- one hidden tanh layer, softmax cross-entropy output; non-convex.

Weight matrices are tagged parameter group 0 and bias-like parameters
group 1, so weight decay can exclude biases by group mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import GradientUnderflowError, UnsupportedModelError, VectorLengthError
from .seeding import rng_for
from .vecmath import ParamVector

__all__ = [
    "WEIGHT_GROUP",
    "BIAS_GROUP",
    "Sample",
    "Batch",
    "as_batch",
    "Dataset",
    "BatchGradient",
    "QuadraticSpec",
    "QuadraticModel",
    "LogisticRegressionModel",
    "MlpModel",
    "make_model",
    "finite_difference_gradient",
    "exact_hessian_vector",
    "make_synthetic_dataset",
    "split_dataset",
]

WEIGHT_GROUP = 0
BIAS_GROUP = 1


@dataclass(frozen=True)
class Sample:
    """One data point: a feature vector and a class index (or real target)."""

    features: np.ndarray
    label: Union[int, float]


class Batch:
    """A mini-batch as dense arrays: features (b, d) and labels (b,)."""

    def __init__(self, features, labels):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels)
        if self.features.ndim != 2:
            raise ValueError("batch features must be 2-D (n_samples, dimension)")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("labels and features disagree on sample count")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]


def as_batch(batch) -> Batch:
    """Accept a Batch or any sequence of Sample."""
    if isinstance(batch, Batch):
        return batch
    samples = list(batch)
    if not samples:
        raise ValueError("batch is empty")
    feats = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
    labels = np.asarray([s.label for s in samples])
    return Batch(feats, labels)


class Dataset:
    """Immutable sample collection with deterministic helpers."""

    def __init__(self, features, labels, n_classes: int = 0):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels)
        self.n_classes = int(n_classes)
        if self.features.ndim != 2:
            raise ValueError("dataset features must be 2-D")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("labels and features disagree on sample count")
        if self.n_classes and np.issubdtype(self.labels.dtype, np.integer):
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= n_classes):
                raise ValueError("label outside declared class count")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def batch(self, indices) -> Batch:
        return Batch(self.features[indices], self.labels[indices])

    def as_batch(self) -> Batch:
        return Batch(self.features, self.labels)

    def subset(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.features[start:stop], self.labels[start:stop], self.n_classes)

    def samples(self) -> list[Sample]:
        return [Sample(self.features[i], self.labels[i].item()) for i in range(len(self))]


@dataclass(frozen=True)
class BatchGradient:
    """Mean gradient over a batch, with the mean loss and top-1 error rate."""

    gradient: ParamVector
    loss: float
    error_rate: float


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    # max-subtraction keeps exp() from overflowing
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy_and_probs(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    losses = log_z - picked
    return float(losses.mean()), _softmax_rows(logits)


def _error_rate(probs: np.ndarray, labels: np.ndarray) -> float:
    # argmax with lowest-index tie-break, which is numpy's argmax behaviour
    predicted = probs.argmax(axis=1)
    return float(np.mean(predicted != labels))


@dataclass(frozen=True)
class QuadraticSpec:
    """Positive-semidefinite curvature H = diag(diag) + sum_r factor_r factor_r^T.

    ``center`` is the unconstrained minimizer.  All diagonal entries must be
    >= 0, which makes H a sum of PSD terms and the objective convex.
    """

    diag: np.ndarray
    center: np.ndarray
    factors: np.ndarray  # (rank, dim); empty (0, dim) for a pure diagonal

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=np.float64)
        c = np.asarray(self.center, dtype=np.float64)
        f = np.asarray(self.factors, dtype=np.float64)
        if f.size == 0:
            f = f.reshape(0, d.shape[0])
        if d.ndim != 1 or c.shape != d.shape or f.ndim != 2 or f.shape[1] != d.shape[0]:
            raise ValueError("inconsistent quadratic spec shapes")
        if (d < 0).any():
            raise ValueError("quadratic diag must be non-negative (PSD objective)")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "factors", f)

    @property
    def dimension(self) -> int:
        return self.diag.shape[0]

    def hessian_dot(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        if self.factors.shape[0]:
            out = out + self.factors.T @ (self.factors @ v)
        return out


class QuadraticModel:
    """Data-independent convex quadratic: L(w) = 0.5 (w-c)^T H (w-c)."""

    kind = "quadratic"

    def __init__(self, spec: QuadraticSpec):
        self.spec = spec
        self.group_ids = np.zeros(spec.dimension, dtype=np.int32)
        self.group_ids.setflags(write=False)

    @classmethod
    def identity(cls, dimension: int, center=None) -> "QuadraticModel":
        c = np.zeros(dimension) if center is None else np.asarray(center, dtype=np.float64)
        return cls(QuadraticSpec(np.ones(dimension), c, np.zeros((0, dimension))))

    @classmethod
    def seeded(cls, dimension: int, seed: int, rank: int = 2) -> "QuadraticModel":
        rng = rng_for(seed, "quadratic-spec")
        diag = rng.uniform(0.2, 1.0, size=dimension)
        center = rng.normal(0.0, 1.0, size=dimension)
        factors = rng.normal(0.0, 1.0, size=(rank, dimension)) / np.sqrt(dimension)
        return cls(QuadraticSpec(diag, center, factors))

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    def init_weights(self, seed: int) -> ParamVector:
        rng = rng_for(seed, "init", "quadratic")
        return ParamVector(rng.normal(0.0, 1.0, size=self.dimension), self.group_ids)

    def _check_weights(self, weights: ParamVector) -> np.ndarray:
        if len(weights) != self.dimension:
            raise VectorLengthError(
                f"weights length {len(weights)} != model dimension {self.dimension}"
            )
        return weights.values

    def batch_loss(self, weights: ParamVector, batch) -> float:
        _require_nonempty(batch)
        w = self._check_weights(weights)
        delta = w - self.spec.center
        return float(0.5 * np.dot(delta, self.spec.hessian_dot(delta)))

    def batch_gradient(self, weights: ParamVector, batch) -> BatchGradient:
        _require_nonempty(batch)
        w = self._check_weights(weights)
        delta = w - self.spec.center
        grad = self.spec.hessian_dot(delta)
        loss = float(0.5 * np.dot(delta, grad))
        return BatchGradient(ParamVector(grad, self.group_ids), loss, 0.0)

    def hessian_vector(self, weights: ParamVector, batch, v: ParamVector) -> ParamVector:
        self._check_weights(weights)
        return ParamVector(self.spec.hessian_dot(v.values), self.group_ids)

    def metrics(self, weights: ParamVector, dataset: Dataset) -> tuple[float, float]:
        return self.batch_loss(weights, dataset.as_batch()), 0.0


class LogisticRegressionModel:
    """Multinomial softmax classifier; parameters are W (C, d) then b (C)."""

    kind = "logistic_regression"

    def __init__(self, input_dim: int, n_classes: int):
        if input_dim < 1 or n_classes < 2:
            raise ValueError("need input_dim >= 1 and n_classes >= 2")
        self.input_dim = input_dim
        self.n_classes = n_classes
        gids = np.concatenate(
            [
                np.full(n_classes * input_dim, WEIGHT_GROUP, dtype=np.int32),
                np.full(n_classes, BIAS_GROUP, dtype=np.int32),
            ]
        )
        gids.setflags(write=False)
        self.group_ids = gids

    @property
    def dimension(self) -> int:
        return self.n_classes * (self.input_dim + 1)

    def init_weights(self, seed: int) -> ParamVector:
        # zeros: the classic deterministic start for a convex softmax objective
        return ParamVector(np.zeros(self.dimension), self.group_ids)

    def _unpack(self, values: np.ndarray):
        c, d = self.n_classes, self.input_dim
        return values[: c * d].reshape(c, d), values[c * d :]

    def _check_weights(self, weights: ParamVector) -> np.ndarray:
        if len(weights) != self.dimension:
            raise VectorLengthError(
                f"weights length {len(weights)} != model dimension {self.dimension}"
            )
        return weights.values

    def _logits(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        W, b = self._unpack(values)
        return x @ W.T + b

    def batch_loss(self, weights: ParamVector, batch) -> float:
        b = as_batch(batch)
        _require_nonempty(b)
        vals = self._check_weights(weights)
        labels = b.labels.astype(np.int64)
        loss, _ = _cross_entropy_and_probs(self._logits(vals, b.features), labels)
        return loss

    def batch_gradient(self, weights: ParamVector, batch) -> BatchGradient:
        b = as_batch(batch)
        _require_nonempty(b)
        vals = self._check_weights(weights)
        labels = b.labels.astype(np.int64)
        logits = self._logits(vals, b.features)
        loss, probs = _cross_entropy_and_probs(logits, labels)
        err = _error_rate(probs, labels)
        dz = probs.copy()
        dz[np.arange(len(b)), labels] -= 1.0
        dz /= len(b)
        grad_W = dz.T @ b.features
        grad_b = dz.sum(axis=0)
        grad = np.concatenate([grad_W.ravel(), grad_b])
        return BatchGradient(ParamVector(grad, self.group_ids), loss, err)

    def hessian_vector(self, weights: ParamVector, batch, v: ParamVector) -> ParamVector:
        b = as_batch(batch)
        _require_nonempty(b)
        vals = self._check_weights(weights)
        if len(v) != self.dimension:
            raise VectorLengthError("direction length != model dimension")
        labels = b.labels.astype(np.int64)
        probs = _softmax_rows(self._logits(vals, b.features))
        V_W, v_b = self._unpack(v.values)
        u = b.features @ V_W.T + v_b  # per-sample directional logit change
        du = probs * u - probs * (probs * u).sum(axis=1, keepdims=True)
        du /= len(b)
        h_W = du.T @ b.features
        h_b = du.sum(axis=0)
        del labels  # Hessian of softmax CE does not depend on the labels
        return ParamVector(np.concatenate([h_W.ravel(), h_b]), self.group_ids)

    def metrics(self, weights: ParamVector, dataset: Dataset) -> tuple[float, float]:
        bg = self.batch_gradient(weights, dataset.as_batch())
        return bg.loss, bg.error_rate


class MlpModel:
    """One hidden tanh layer, softmax cross-entropy output.

    Parameter layout: W1 (h, d), b1 (h), W2 (C, h), b2 (C), flattened row-major
    in that order.
    """

    kind = "mlp"

    def __init__(self, input_dim: int, hidden_units: int, n_classes: int):
        if min(input_dim, hidden_units) < 1 or n_classes < 2:
            raise ValueError("bad mlp architecture")
        self.input_dim = input_dim
        self.hidden_units = hidden_units
        self.n_classes = n_classes
        d, h, c = input_dim, hidden_units, n_classes
        gids = np.concatenate(
            [
                np.full(h * d, WEIGHT_GROUP, dtype=np.int32),
                np.full(h, BIAS_GROUP, dtype=np.int32),
                np.full(c * h, WEIGHT_GROUP, dtype=np.int32),
                np.full(c, BIAS_GROUP, dtype=np.int32),
            ]
        )
        gids.setflags(write=False)
        self.group_ids = gids

    @property
    def architecture(self) -> tuple[int, int, int]:
        return (self.input_dim, self.hidden_units, self.n_classes)

    @property
    def dimension(self) -> int:
        d, h, c = self.architecture
        return h * d + h + c * h + c

    def init_weights(self, seed: int) -> ParamVector:
        d, h, c = self.architecture
        rng = rng_for(seed, "init", "mlp")
        a1 = np.sqrt(6.0 / (d + h))
        a2 = np.sqrt(6.0 / (h + c))
        W1 = rng.uniform(-a1, a1, size=(h, d))
        W2 = rng.uniform(-a2, a2, size=(c, h))
        vals = np.concatenate([W1.ravel(), np.zeros(h), W2.ravel(), np.zeros(c)])
        return ParamVector(vals, self.group_ids)

    def _unpack(self, values: np.ndarray):
        d, h, c = self.architecture
        i = 0
        W1 = values[i : i + h * d].reshape(h, d); i += h * d
        b1 = values[i : i + h]; i += h
        W2 = values[i : i + c * h].reshape(c, h); i += c * h
        b2 = values[i : i + c]
        return W1, b1, W2, b2

    def _check_weights(self, weights: ParamVector) -> np.ndarray:
        if len(weights) != self.dimension:
            raise VectorLengthError(
                f"weights length {len(weights)} != model dimension {self.dimension}"
            )
        return weights.values

    def _forward(self, values: np.ndarray, x: np.ndarray):
        W1, b1, W2, b2 = self._unpack(values)
        hidden = np.tanh(x @ W1.T + b1)
        logits = hidden @ W2.T + b2
        return hidden, logits

    def batch_loss(self, weights: ParamVector, batch) -> float:
        b = as_batch(batch)
        _require_nonempty(b)
        vals = self._check_weights(weights)
        labels = b.labels.astype(np.int64)
        _, logits = self._forward(vals, b.features)
        loss, _ = _cross_entropy_and_probs(logits, labels)
        return loss

    def batch_gradient(self, weights: ParamVector, batch) -> BatchGradient:
        b = as_batch(batch)
        _require_nonempty(b)
        vals = self._check_weights(weights)
        labels = b.labels.astype(np.int64)
        W1, b1, W2, b2 = self._unpack(vals)
        hidden, logits = self._forward(vals, b.features)
        loss, probs = _cross_entropy_and_probs(logits, labels)
        err = _error_rate(probs, labels)
        dz = probs.copy()
        dz[np.arange(len(b)), labels] -= 1.0
        dz /= len(b)
        grad_W2 = dz.T @ hidden
        grad_b2 = dz.sum(axis=0)
        dh = (dz @ W2) * (1.0 - hidden * hidden)
        grad_W1 = dh.T @ b.features
        grad_b1 = dh.sum(axis=0)
        grad = np.concatenate([grad_W1.ravel(), grad_b1, grad_W2.ravel(), grad_b2])
        return BatchGradient(ParamVector(grad, self.group_ids), loss, err)

    def metrics(self, weights: ParamVector, dataset: Dataset) -> tuple[float, float]:
        bg = self.batch_gradient(weights, dataset.as_batch())
        return bg.loss, bg.error_rate


Model = Union[QuadraticModel, LogisticRegressionModel, MlpModel]


def make_model(
    kind: str,
    *,
    input_dim: int = 0,
    n_classes: int = 0,
    hidden_units: int = 0,
    seed: int = 0,
    quadratic_rank: int = 2,
) -> Model:
    if kind == "quadratic":
        return QuadraticModel.seeded(input_dim, seed, rank=quadratic_rank)
    if kind == "logistic_regression":
        return LogisticRegressionModel(input_dim, n_classes)
    if kind == "mlp":
        return MlpModel(input_dim, hidden_units, n_classes)
    raise ValueError(f"unknown model kind {kind!r}")


def finite_difference_gradient(model: Model, weights: ParamVector, batch, step: float) -> ParamVector:
    """Central-difference gradient of the batch loss; the test-side oracle.

    Raises :class:`GradientUnderflowError` when the step is so small that every
    loss difference underflows to zero while the loss itself is nonzero.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    base = weights.values
    diffs = np.zeros(len(weights))
    any_nonzero = False
    for k in range(len(weights)):
        bumped = base.copy()
        bumped[k] = base[k] + step
        up = model.batch_loss(weights.with_values(bumped), batch)
        bumped[k] = base[k] - step
        down = model.batch_loss(weights.with_values(bumped), batch)
        diffs[k] = (up - down) / (2.0 * step)
        any_nonzero = any_nonzero or up != down
    if not any_nonzero and model.batch_loss(weights, batch) != 0.0:
        raise GradientUnderflowError(
            f"step {step} underflowed all loss differences; increase the step"
        )
    return weights.with_values(diffs)


def exact_hessian_vector(model: Model, weights: ParamVector, batch, v: ParamVector) -> ParamVector:
    """Analytic H(w) . v of the batch loss; quadratic and logistic kinds only."""
    if not hasattr(model, "hessian_vector"):
        raise UnsupportedModelError(f"model kind {model.kind!r} has no analytic Hessian")
    return model.hessian_vector(weights, batch, v)


def _require_nonempty(batch) -> None:
    if isinstance(batch, (Batch, Dataset)) and len(batch) == 0:
        raise ValueError("batch is empty")


def make_synthetic_dataset(
    kind: str,
    n_samples: int,
    dimension: int,
    n_classes: int,
    seed: int,
    *,
    margin: float = 4.0,
) -> Dataset:
    """Deterministic synthetic dataset for the given seed.

    Classification kinds get unit-noise Gaussian clusters placed at
    ``margin`` times seeded random unit directions, so separability is
    controlled by ``margin``.  The quadratic kind ignores features, so it
    gets placeholder Gaussian features with label 0.
    """
    if n_samples < 1 or dimension < 1:
        raise ValueError("n_samples and dimension must be positive")
    rng = rng_for(seed, "synthetic", kind, n_samples, dimension, n_classes)
    if kind == "quadratic":
        feats = rng.normal(0.0, 1.0, size=(n_samples, dimension))
        return Dataset(feats, np.zeros(n_samples, dtype=np.int64), 0)
    if n_classes < 2:
        raise ValueError("classification dataset needs n_classes >= 2")
    centers = rng.normal(0.0, 1.0, size=(n_classes, dimension))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = rng.integers(0, n_classes, size=n_samples)
    feats = margin * centers[labels] + rng.normal(0.0, 1.0, size=(n_samples, dimension))
    return Dataset(feats, labels.astype(np.int64), n_classes)


def split_dataset(dataset: Dataset, val_fraction: float) -> tuple[Dataset, Dataset]:
    """Deterministic head/tail split; rows are already in seeded random order."""
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must be in [0, 1)")
    n_train = int(len(dataset) * (1.0 - val_fraction))
    return dataset.subset(0, n_train), dataset.subset(n_train, len(dataset))
