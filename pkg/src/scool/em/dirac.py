"""Degenerate (fixed-graph) prior: decentralized parallel SGD.

With the cooperation graph frozen at a symmetric row-stochastic w and the
model prior scale tied to the step size (lambda = 1/step), the generic
cooperative update collapses to gossip averaging followed by a local
gradient step. Both the collapsed form and the pre-collapse manifold
descent form are implemented; they agree to machine precision, which the
test suite exploits.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ConfigurationError, DivergenceError
from ..models import Dataset, LocalModel, grad


def metropolis_weights(mask: np.ndarray) -> np.ndarray:
    """Symmetric row-stochastic mixing weights for an undirected mask:
    w_ij = 1/(1 + max(deg_i, deg_j)) on edges, remainder on the diagonal.
    On a fully-connected mask this is the uniform matrix."""
    mask = np.asarray(mask, dtype=bool)
    if not np.array_equal(mask, mask.T):
        raise ConfigurationError("metropolis weights need a symmetric mask")
    K = len(mask)
    off = mask.copy()
    np.fill_diagonal(off, False)
    deg = off.sum(axis=1)
    w = np.zeros((K, K))
    for i in range(K):
        for j in range(K):
            if i != j and off[i, j]:
                w[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def _validate_w(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    K = len(w)
    if not np.allclose(w, w.T, atol=1e-12):
        raise ConfigurationError("gossip weights must be symmetric")
    if not np.allclose(w.sum(axis=1), np.ones(K), atol=1e-9):
        raise ConfigurationError("gossip weights must be row-stochastic")
    return w


def dpsgd_step(
    models: Sequence[LocalModel],
    w: np.ndarray,
    train_sets: Sequence[Dataset],
    eta1: float,
) -> None:
    """theta_i <- sum_j w_ij theta_j - eta1 * grad_i, with the gradient
    evaluated at the pre-averaging parameters."""
    w = _validate_w(w)
    K = len(models)
    thetas = np.stack([m.theta for m in models])
    grads = np.stack([grad(models[i], train_sets[i]) for i in range(K)])
    new = w @ thetas - eta1 * grads
    if not np.all(np.isfinite(new)):
        raise DivergenceError("gossip step produced non-finite parameters")
    for i in range(K):
        models[i].theta = new[i]


def manifold_descent_step(
    models: Sequence[LocalModel],
    w: np.ndarray,
    train_sets: Sequence[Dataset],
    eta1: float,
) -> None:
    """The pre-collapse form: descend on the own loss plus the pairwise
    distance penalty (lambda/2) sum_j (w_ij + w_ji) ||theta_i - theta_j||^2
    with lambda = 1/eta1. Algebraically identical to ``dpsgd_step``."""
    w = _validate_w(w)
    lam = 1.0 / eta1
    K = len(models)
    thetas = np.stack([m.theta for m in models])
    grads = np.stack([grad(models[i], train_sets[i]) for i in range(K)])
    new = np.empty_like(thetas)
    for i in range(K):
        pull = np.zeros_like(thetas[i])
        for j in range(K):
            pull += 0.5 * (w[i, j] + w[j, i]) * (thetas[i] - thetas[j])
        new[i] = thetas[i] - eta1 * (grads[i] + lam * pull)
    if not np.all(np.isfinite(new)):
        raise DivergenceError("manifold step produced non-finite parameters")
    for i in range(K):
        models[i].theta = new[i]
