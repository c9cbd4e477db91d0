"""Cooperative local-model updates shared by all structured priors.

Each local step descends on the client's own mean cross-entropy plus the
neighbor losses weighted by the cooperation graph plus the ridge prior.
All gradients of a step are taken on a snapshot of the models before any
parameter moves, so the sweep is order-independent and a run with the same
inputs is bit-for-bit reproducible.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, DivergenceError
from ..models import Dataset, LocalModel, grad
from ..topology import CROSS_GRADIENT, TAYLOR_APPROX

# Optional per-step extra descent terms (the attention coupling); called on
# the pre-step snapshot, returns one vector per client.
CouplingFn = Callable[[Sequence[LocalModel]], np.ndarray]


def cooperative_sgd_steps(
    models: Sequence[LocalModel],
    train_sets: Sequence[Dataset],
    w: np.ndarray,
    lam: float,
    eta1: float,
    steps: int,
    grad_mode: str = CROSS_GRADIENT,
    mask: np.ndarray | None = None,
    coupling_fn: CouplingFn | None = None,
) -> None:
    """Run ``steps`` synchronous cooperative gradient steps in place.

    grad_mode selects the neighbor-gradient route: exact cross-gradients
    grad(theta_i; D_j), or the first-order surrogate grad(theta_j; D_j)
    which is exact when all models coincide and only needs each neighbor's
    own gradient on the wire.
    """
    if eta1 <= 0:
        raise ConfigurationError("eta1 must be positive")
    if grad_mode not in (CROSS_GRADIENT, TAYLOR_APPROX):
        raise ConfigurationError(f"unknown grad_mode {grad_mode!r}")
    K = len(models)
    w = np.asarray(w, dtype=float)
    allowed = np.ones((K, K), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)

    for step in range(steps):
        own = [grad(models[i], train_sets[i]) for i in range(K)]
        if grad_mode == TAYLOR_APPROX:
            neighbor = {j: own[j] for j in range(K)}
        coupling = coupling_fn(models) if coupling_fn is not None else None

        updates = []
        for i in range(K):
            delta = own[i] + lam * models[i].theta
            for j in range(K):
                if j == i or not allowed[i, j] or w[i, j] == 0.0:
                    continue
                g = neighbor[j] if grad_mode == TAYLOR_APPROX else grad(models[i], train_sets[j])
                delta = delta + w[i, j] * g
            if coupling is not None:
                delta = delta + coupling[i]
            if not np.all(np.isfinite(delta)):
                raise DivergenceError(f"client {i} produced a non-finite update at local step {step}")
            updates.append(delta)
        for i in range(K):
            theta = models[i].theta - eta1 * updates[i]
            if not np.all(np.isfinite(theta)):
                raise DivergenceError(f"client {i} parameters left the finite range at local step {step}")
            models[i].theta = theta
