"""Communication topology, top-k sparsification and traffic accounting.

Masks are K x K booleans with an always-true diagonal: a client talks to
itself for free. The ledger counts traffic in model-parameter-vector
units so budgets compare across architectures; log-likelihood scalars are
counted separately. Whether the evaluation payload rides on the gradient
exchange is a deployment choice, so the ledger reports both readings
(folded vs. separate).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .errors import ConfigurationError

FULLY_CONNECTED = "fully-connected"
GROUP_RING = "group-ring"
GENERALIZED_BIPARTITE = "generalized-bipartite"
CUSTOM_MASK = "custom-mask"

CROSS_GRADIENT = "cross-gradient"
TAYLOR_APPROX = "taylor-approx"


@dataclass
class Topology:
    kind: str
    mask: np.ndarray  # K x K bool, diagonal True

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        K = len(self.mask)
        if self.mask.shape != (K, K):
            raise ConfigurationError("mask must be square")
        if not np.all(np.diag(self.mask)):
            raise ConfigurationError("mask diagonal must be true")
        if K > 1:
            off = self.mask.copy()
            np.fill_diagonal(off, False)
            if not np.all(off.sum(axis=1) >= 1):
                raise ConfigurationError("every client needs at least one neighbor")

    @property
    def n_clients(self) -> int:
        return len(self.mask)

    def directed_edges(self) -> int:
        """Number of directed off-diagonal edges in the mask."""
        return int(self.mask.sum()) - self.n_clients


def build_topology(
    kind: str,
    K: int,
    *,
    k0: int | None = None,
    degree: int | None = None,
    mask: np.ndarray | None = None,
    seed: int = 0,
) -> Topology:
    """Construct a mask. group-ring links clients at cyclic index distance
    <= (K - K0)/2; generalized-bipartite randomly splits the clients in two
    halves and wires each client to ``degree`` partners on the other side
    (then symmetrizes)."""
    if K < 2 and kind != CUSTOM_MASK:
        raise ConfigurationError("topologies need at least two clients")
    if kind == FULLY_CONNECTED:
        m = np.ones((K, K), dtype=bool)
        return Topology(kind, m)
    if kind == GROUP_RING:
        if k0 is None or not (0 <= k0 < K):
            raise ConfigurationError("group-ring needs 0 <= K0 < K")
        reach = (K - k0) / 2.0
        idx = np.arange(K)
        dist = np.abs(idx[:, None] - idx[None, :])
        cyc = np.minimum(dist, K - dist)
        m = cyc <= reach
        np.fill_diagonal(m, True)
        return Topology(kind, m)
    if kind == GENERALIZED_BIPARTITE:
        if degree is None or degree < 1 or degree > K // 2:
            raise ConfigurationError("bipartite degree must be in [1, K/2]")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(K)
        half = K // 2
        side_a, side_b = perm[:half], perm[half:]
        m = np.zeros((K, K), dtype=bool)
        for own, other in ((side_a, side_b), (side_b, side_a)):
            for i in own:
                partners = rng.choice(other, size=degree, replace=False)
                m[i, partners] = True
        m |= m.T
        np.fill_diagonal(m, True)
        return Topology(kind, m)
    if kind == CUSTOM_MASK:
        if mask is None:
            raise ConfigurationError("custom-mask needs an explicit mask")
        m = np.array(mask, dtype=bool)
        np.fill_diagonal(m, True)
        return Topology(kind, m)
    raise ConfigurationError(f"unknown topology kind {kind!r}")


def sparsify_topk(
    w: np.ndarray,
    mask: np.ndarray,
    keep_fraction: float,
    current_round: int,
    activate_round: int,
) -> np.ndarray:
    """Prune each client's neighborhood to its ceil(keep_fraction*(K-1))
    strongest weights once ``current_round`` reaches ``activate_round``.

    Candidates are the currently unmasked off-diagonal entries, ties break
    toward the lower index, and re-application is a no-op, so the pruning
    is one-shot and then frozen.
    """
    if not (0.0 < keep_fraction <= 1.0):
        raise ConfigurationError("keep_fraction must lie in (0, 1]")
    mask = np.asarray(mask, dtype=bool)
    if current_round < activate_round or keep_fraction == 1.0:
        return mask.copy()
    w = np.asarray(w, dtype=float)
    K = len(mask)
    keep = ceil(keep_fraction * (K - 1))
    out = np.zeros_like(mask)
    np.fill_diagonal(out, True)
    for i in range(K):
        cand = [j for j in range(K) if j != i and mask[i, j]]
        if cand and not any(w[i, j] > 0 for j in cand):
            raise ConfigurationError(f"sparsify: row {i} has no positive weight")
        cand.sort(key=lambda j: (-w[i, j], j))
        for j in cand[:keep]:
            out[i, j] = True
    return out


@dataclass
class RoundTraffic:
    """Traffic of one round, in counts (models/gradients are whole vectors)."""

    round_index: int
    models_sent: int
    gradients_sent: int
    scalars_sent: int
    vector_units_folded: float
    vector_units_separate: float


@dataclass
class CommLedger:
    """Cumulative communication account for one run."""

    n_clients: int
    model_dim: int
    rounds: list[RoundTraffic] = field(default_factory=list)
    models_sent: int = 0
    gradients_sent: int = 0
    scalars_sent: int = 0
    models_sent_by: np.ndarray = field(default=None)
    gradients_sent_by: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.models_sent_by is None:
            self.models_sent_by = np.zeros(self.n_clients, dtype=int)
        if self.gradients_sent_by is None:
            self.gradients_sent_by = np.zeros(self.n_clients, dtype=int)

    def _push(self, rec: RoundTraffic, models_by, gradients_by) -> None:
        self.rounds.append(rec)
        self.models_sent += rec.models_sent
        self.gradients_sent += rec.gradients_sent
        self.scalars_sent += rec.scalars_sent
        self.models_sent_by += models_by
        self.gradients_sent_by += gradients_by

    @property
    def total_vector_units_folded(self) -> float:
        return sum(r.vector_units_folded for r in self.rounds)

    @property
    def total_vector_units_separate(self) -> float:
        return sum(r.vector_units_separate for r in self.rounds)

    def totals(self) -> dict:
        return {
            "models_sent": self.models_sent,
            "gradients_sent": self.gradients_sent,
            "scalars_sent": self.scalars_sent,
            "vector_units_folded": self.total_vector_units_folded,
            "vector_units_separate": self.total_vector_units_separate,
        }


def _degrees(mask: np.ndarray):
    off = np.asarray(mask, dtype=bool).copy()
    np.fill_diagonal(off, False)
    return off.sum(axis=1), off.sum(axis=0)  # out-degree, in-degree


def account_exchange(
    ledger: CommLedger,
    mask: np.ndarray,
    grad_mode: str,
    round_index: int,
    sweeps: int = 1,
) -> RoundTraffic:
    """Charge one EM round: ``sweeps`` gradient exchanges plus one
    log-likelihood evaluation pass over the masked directed edges.

    cross-gradient ships the model out and the gradient back (2 vectors per
    edge per sweep); taylor-approx ships only the neighbor's own gradient
    (1 vector). The evaluation pass needs the model on the neighbor: under
    cross-gradient that payload is already in flight (folded total), under
    taylor-approx it is always an extra shipment.
    """
    if grad_mode not in (CROSS_GRADIENT, TAYLOR_APPROX):
        raise ConfigurationError(f"unknown grad_mode {grad_mode!r}")
    out_deg, in_deg = _degrees(mask)
    E = int(out_deg.sum())
    if grad_mode == CROSS_GRADIENT:
        models = sweeps * E
        gradients = sweeps * E
        folded = float(2 * sweeps * E)
        separate = float(2 * sweeps * E + E)
        models_by = sweeps * out_deg
        gradients_by = sweeps * in_deg
    else:
        models = E  # evaluation shipment only
        gradients = sweeps * E
        folded = float(sweeps * E + E)
        separate = folded
        models_by = out_deg.copy()
        gradients_by = sweeps * in_deg
    scalars = E
    separate += 0.0 if ledger.model_dim == 0 else scalars / ledger.model_dim
    folded += 0.0 if ledger.model_dim == 0 else scalars / ledger.model_dim
    rec = RoundTraffic(round_index, models, gradients, scalars, folded, separate)
    ledger._push(rec, np.asarray(models_by, dtype=int), np.asarray(gradients_by, dtype=int))
    return rec


def account_gossip(
    ledger: CommLedger, mask: np.ndarray, round_index: int, sweeps: int = 1
) -> RoundTraffic:
    """Charge a gossip-averaging round: one model per directed edge per sweep."""
    out_deg, in_deg = _degrees(mask)
    E = int(out_deg.sum())
    models = sweeps * E
    rec = RoundTraffic(round_index, models, 0, 0, float(models), float(models))
    ledger._push(rec, sweeps * out_deg, np.zeros(ledger.n_clients, dtype=int))
    return rec
