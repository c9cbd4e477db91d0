"""Per-client models: flat-parameter classifiers with analytic gradients.

Two desk-scale architectures are supported, softmax regression and a
one-hidden-layer tanh MLP. Both keep their parameters in a single flat
vector so mixing, averaging and finite-difference checks stay trivial.
The cross-entropy here is always the per-sample mean; the ridge prior on
the parameters is applied by the EM updates, not inside the data loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SOFTMAX_REGRESSION = "softmax-regression"
MLP_1HIDDEN = "mlp-1hidden"


@dataclass(frozen=True)
class ArchSpec:
    """Architecture descriptor: input dim, class count, optional hidden width."""

    kind: str
    d: int
    C: int
    h: int = 0

    def __post_init__(self):
        if self.kind not in (SOFTMAX_REGRESSION, MLP_1HIDDEN):
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        if self.d < 1 or self.C < 2:
            raise ValueError("architecture needs d >= 1 and C >= 2")
        if self.kind == MLP_1HIDDEN and self.h < 1:
            raise ValueError("mlp-1hidden needs a positive hidden width")

    @property
    def n_params(self) -> int:
        if self.kind == SOFTMAX_REGRESSION:
            return self.C * self.d + self.C
        return self.h * self.d + self.h + self.C * self.h + self.C


@dataclass
class Dataset:
    """Labeled feature matrix for one client.

    Labels are local indices into ``class_set`` (sorted global class ids),
    so clients with identical class sets share a label space.
    """

    features: np.ndarray
    labels: np.ndarray
    class_set: tuple[int, ...]
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be N x d with one label per row")
        if len(self.labels) < 1:
            raise ValueError("dataset must contain at least one sample")
        self.class_set = tuple(sorted(int(c) for c in self.class_set))
        if self.labels.min() < 0 or self.labels.max() >= len(self.class_set):
            raise ValueError("labels must index into class_set")

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass
class LocalModel:
    """One client's personalized model: flat parameters plus the frozen
    snapshot of the parameters it started from."""

    theta: np.ndarray
    arch: ArchSpec
    init_theta: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.arch.n_params,):
            raise ValueError(
                f"theta has {self.theta.size} entries, arch wants {self.arch.n_params}"
            )
        if self.init_theta is None:
            self.init_theta = self.theta.copy()
        else:
            self.init_theta = np.asarray(self.init_theta, dtype=float).copy()
        self.init_theta.setflags(write=False)

    def copy(self) -> "LocalModel":
        return LocalModel(self.theta.copy(), self.arch, self.init_theta)


def init_model(arch: ArchSpec, rng: np.random.Generator, scale: float = 0.01) -> LocalModel:
    theta = scale * rng.standard_normal(arch.n_params)
    return LocalModel(theta, arch)


def _check_data(model: LocalModel, data: Dataset) -> None:
    if data.features.shape[1] != model.arch.d:
        raise ValueError(
            f"feature dim {data.features.shape[1]} does not match arch d={model.arch.d}"
        )


def _unpack_linear(theta: np.ndarray, arch: ArchSpec):
    W = theta[: arch.C * arch.d].reshape(arch.C, arch.d)
    b = theta[arch.C * arch.d :]
    return W, b


def _unpack_mlp(theta: np.ndarray, arch: ArchSpec):
    h, d, C = arch.h, arch.d, arch.C
    o = 0
    W1 = theta[o : o + h * d].reshape(h, d)
    o += h * d
    b1 = theta[o : o + h]
    o += h
    W2 = theta[o : o + C * h].reshape(C, h)
    o += C * h
    b2 = theta[o : o + C]
    return W1, b1, W2, b2


def logits(model: LocalModel, X: np.ndarray) -> np.ndarray:
    """Raw class scores, N x C."""
    arch = model.arch
    if arch.kind == SOFTMAX_REGRESSION:
        W, b = _unpack_linear(model.theta, arch)
        return X @ W.T + b
    W1, b1, W2, b2 = _unpack_mlp(model.theta, arch)
    return np.tanh(X @ W1.T + b1) @ W2.T + b2


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss(model: LocalModel, data: Dataset, weight_decay: float = 0.0) -> float:
    """Mean cross-entropy over the samples.

    ``weight_decay`` > 0 adds the ridge term wd/2 * ||theta||^2 for callers
    that want the regularized objective; the EM loop never passes it (the
    prior enters its gradient updates directly).
    """
    _check_data(model, data)
    lsm = _log_softmax(logits(model, data.features))
    ce = -float(np.mean(lsm[np.arange(data.n), data.labels]))
    if weight_decay > 0.0:
        ce += 0.5 * weight_decay * float(model.theta @ model.theta)
    return ce


def grad(model: LocalModel, data: Dataset) -> np.ndarray:
    """Analytic gradient of the mean cross-entropy w.r.t. the flat theta."""
    _check_data(model, data)
    arch = model.arch
    X = data.features
    n = data.n
    if arch.kind == SOFTMAX_REGRESSION:
        W, b = _unpack_linear(model.theta, arch)
        Z = X @ W.T + b
        P = np.exp(_log_softmax(Z))
        P[np.arange(n), data.labels] -= 1.0
        P /= n
        return np.concatenate([(P.T @ X).ravel(), P.sum(axis=0)])
    W1, b1, W2, b2 = _unpack_mlp(model.theta, arch)
    A = np.tanh(X @ W1.T + b1)
    Z = A @ W2.T + b2
    P = np.exp(_log_softmax(Z))
    P[np.arange(n), data.labels] -= 1.0
    P /= n
    dA = P @ W2
    dZ1 = dA * (1.0 - A * A)
    return np.concatenate(
        [(dZ1.T @ X).ravel(), dZ1.sum(axis=0), (P.T @ A).ravel(), P.sum(axis=0)]
    )


def log_likelihood(model: LocalModel, data: Dataset) -> float:
    """Mean log-probability of the labels under the model: -loss(model, data).

    Per-sample averaging keeps this comparable across clients with
    different dataset sizes; magnitude is the temperature's job.
    """
    return -loss(model, data, 0.0)


def accuracy(model: LocalModel, data: Dataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class."""
    _check_data(model, data)
    preds = np.argmax(logits(model, data.features), axis=1)
    return float(np.mean(preds == data.labels))
