"""Variational EM core: per-prior state, closed-form E-steps, gradient
M-steps, the evidence-lower-bound oracle and the round orchestrator."""

from .state import AttentionState, DiracState, MmsbmState, SbmState
from .elbo import ElboBreakdown, elbo
from .rounds import loglik_matrix, run_round

__all__ = [
    "AttentionState",
    "DiracState",
    "MmsbmState",
    "SbmState",
    "ElboBreakdown",
    "elbo",
    "loglik_matrix",
    "run_round",
]
