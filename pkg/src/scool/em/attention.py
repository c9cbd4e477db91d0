"""Attention prior: cooperation weights from encoded model-update similarity.

A small two-layer encoder maps each client's accumulated model update
(theta minus its shared starting point) to an embedding; dot products of
embeddings define a row-stochastic attention matrix p, the E-step folds p
together with the cross-client log-likelihoods into w, and the M-step
trains the encoder to pull p toward w (row-wise cross-entropy descent).

Gradients here are written out by hand: the encoder is three matmuls and a
tanh, and keeping the whole package autograd-free makes the finite-
difference oracles in the tests genuinely independent.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ConfigurationError, DivergenceError
from ..models import Dataset, LocalModel
from ..special import softmax_tempered
from ..topology import CROSS_GRADIENT
from .state import PROB_FLOOR, AttentionState, ascent_step
from .theta import cooperative_sgd_steps


def unpack_encoder(phi: np.ndarray, dims: tuple[int, int, int]):
    d, h, out = dims
    o = 0
    W1 = phi[o : o + h * d].reshape(h, d)
    o += h * d
    b1 = phi[o : o + h]
    o += h
    W2 = phi[o : o + out * h].reshape(out, h)
    o += out * h
    b2 = phi[o : o + out]
    return W1, b1, W2, b2


def pack_encoder(W1, b1, W2, b2) -> np.ndarray:
    return np.concatenate([W1.ravel(), b1, W2.ravel(), b2])


def model_deltas(models: Sequence[LocalModel]) -> np.ndarray:
    """Accumulated updates theta - theta_init, stacked K x D."""
    return np.stack([m.theta - m.init_theta for m in models])


def encode(phi: np.ndarray, dims: tuple[int, int, int], X: np.ndarray) -> np.ndarray:
    W1, b1, W2, b2 = unpack_encoder(phi, dims)
    return np.tanh(X @ W1.T + b1) @ W2.T + b2


def _masked_row_softmax(scores: np.ndarray, tau: float, mask: np.ndarray | None) -> np.ndarray:
    K = len(scores)
    if mask is None:
        return softmax_tempered(scores, tau, axis=-1)
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros_like(scores)
    for i in range(K):
        allowed = np.where(mask[i])[0]
        if allowed.size == 0:
            raise ConfigurationError(f"client {i} has a fully masked row")
        out[i, allowed] = softmax_tempered(scores[i, allowed], tau)
    return out


def compute_p(
    models: Sequence[LocalModel],
    phi: np.ndarray,
    dims: tuple[int, int, int],
    tau: float,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Row-stochastic attention from embedding dot products; masked pairs
    are excluded from the normalization."""
    E = encode(phi, dims, model_deltas(models))
    return _masked_row_softmax(E @ E.T, tau, mask)


def update_w(state: AttentionState, loglik: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise tempered softmax of log-likelihood plus log-attention.

    The self column carries only its attention score: the client's own-data
    term sits outside the graph posterior, so the stationary weight for
    j = i has no likelihood contribution.
    """
    logits = np.array(loglik, dtype=float)
    np.fill_diagonal(logits, 0.0)
    logits = logits + np.log(np.maximum(state.p, PROB_FLOOR))
    return _masked_row_softmax(logits, state.tau_softmax, mask)


def _encoder_forward(phi, dims, X):
    W1, b1, W2, b2 = unpack_encoder(phi, dims)
    H = np.tanh(X @ W1.T + b1)
    E = H @ W2.T + b2
    return W1, W2, H, E


def _attention_residual(w, p, tau, mask):
    """d/dF of sum_j w_ij log p_ij, rows of w on the simplex: (w - p)/tau."""
    C = (w - p) / tau
    if mask is not None:
        C = np.where(np.asarray(mask, dtype=bool), C, 0.0)
    return C


def coupling_descent_terms(
    models: Sequence[LocalModel],
    state: AttentionState,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Per-client descent contribution -grad_theta_i sum_j w_ij log p_ij.

    Only client i's own embedding is differentiated (the update is local);
    within row i the self score <e_i, e_i> contributes through both slots,
    so the analytic value matches a finite difference of the row objective.
    """
    X = model_deltas(models)
    W1, W2, H, E = _encoder_forward(state.phi, state.enc_dims, X)
    p = compute_p(models, state.phi, state.enc_dims, state.tau_softmax, mask)
    C = _attention_residual(state.w, p, state.tau_softmax, mask)
    K = len(models)
    dE = C @ E  # row i: sum_j C_ij e_j
    dE += (np.diag(C)[:, None]) * E  # second slot of the self score
    dH = dE @ W2
    dZ = dH * (1.0 - H * H)
    dX = dZ @ W1  # ascent direction on theta_i
    return -dX


def phi_gradient(
    state: AttentionState,
    models: Sequence[LocalModel],
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Ascent gradient of sum_ij w_ij log p_ij w.r.t. the encoder, flowing
    through every embedding."""
    X = model_deltas(models)
    W1, W2, H, E = _encoder_forward(state.phi, state.enc_dims, X)
    p = compute_p(models, state.phi, state.enc_dims, state.tau_softmax, mask)
    C = _attention_residual(state.w, p, state.tau_softmax, mask)
    dE = (C + C.T) @ E
    dH = dE @ W2
    dZ = dH * (1.0 - H * H)
    dW2 = dE.T @ H
    db2 = dE.sum(axis=0)
    dW1 = dZ.T @ X
    db1 = dZ.sum(axis=0)
    return pack_encoder(dW1, db1, dW2, db2)


def update_phi(
    state: AttentionState,
    models: Sequence[LocalModel],
    mask: np.ndarray | None = None,
    optimizer: str = "plain",
    weight_decay: float = 0.0,
) -> np.ndarray:
    """One encoder ascent step on the attention agreement objective."""
    g = phi_gradient(state, models, mask)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("encoder gradient is non-finite")
    return ascent_step(state.phi, g, state.eta2, optimizer, state.phi_slot, weight_decay)


def e_step(
    state: AttentionState,
    models: Sequence[LocalModel],
    loglik: np.ndarray,
    mask: np.ndarray | None = None,
) -> AttentionState:
    state.p = compute_p(models, state.phi, state.enc_dims, state.tau_softmax, mask)
    state.w = update_w(state, loglik, mask)
    return state


def m_step(
    state: AttentionState,
    models: Sequence[LocalModel],
    train_sets: Sequence[Dataset],
    eta1: float,
    local_steps: int,
    grad_mode: str = CROSS_GRADIENT,
    mask: np.ndarray | None = None,
    coupling: bool = True,
    optimizer: str = "plain",
    optimizer_weight_decay: float = 0.0,
) -> AttentionState:
    coupling_fn = None
    if coupling:
        coupling_fn = lambda ms: coupling_descent_terms(ms, state, mask)
    cooperative_sgd_steps(
        models, train_sets, state.w, state.lam, eta1, local_steps, grad_mode, mask, coupling_fn
    )
    state.phi = update_phi(state, models, mask, optimizer, optimizer_weight_decay)
    return state
