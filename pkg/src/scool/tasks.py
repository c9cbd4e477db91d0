"""Synthetic non-IID task construction with a known cooperation ground truth.

Classes live in a shared Gaussian universe (one mean per class, isotropic
noise). Clients receive class subsets either group-wise (disjoint sets
shared within a group) or independently at random; two clients share a
positive ground-truth cooperation weight exactly when their class sets
coincide. All randomness flows through one seed so a run can be repeated
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .models import Dataset
from .special import row_normalize

# Pairwise Bayes accuracy for two classes at orthonormal means scaled by s
# with unit noise is Phi(s / sqrt(2)); this scaling hits ~0.9, keeping the
# tasks learnable but not trivial.
DEFAULT_SEPARATION = 1.8123876048736465

ORTHONORMAL = "orthonormal"
ANTIPODAL_PAIRS = "antipodal-pairs"


@dataclass(frozen=True)
class TaskUniverse:
    """Shared class-conditional generators: one Gaussian mean per class."""

    means: np.ndarray  # M x d
    sigma: float

    def __post_init__(self):
        if len(self.means) < 2:
            raise ConfigurationError("universe needs at least two classes")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be nonnegative")

    @property
    def n_classes(self) -> int:
        return len(self.means)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class TaskAssignment:
    """Per-client class sets plus the row-stochastic cooperation ground truth."""

    class_sets: list[tuple[int, ...]]
    w_star: np.ndarray  # K x K, rows sum to 1
    group_labels: np.ndarray | None = None

    @property
    def n_clients(self) -> int:
        return len(self.class_sets)


def make_universe(
    M: int,
    d: int,
    sigma: float = 1.0,
    separation: float = DEFAULT_SEPARATION,
    seed: int | np.random.SeedSequence = 0,
    placement: str = ORTHONORMAL,
) -> TaskUniverse:
    """Place M class means, scaled by ``separation``.

    ``orthonormal`` puts each mean on its own random orthonormal direction.
    ``antipodal-pairs`` arranges consecutive class pairs (2t, 2t+1) around
    well-separated pair centers, with the within-pair axes drawn from one
    shared 2-plane so that the axes of all pairs sum to zero. No single
    classifier can then fit every pair's discrimination simultaneously,
    which keeps cross-group tasks in genuine conflict regardless of how
    well individual models train. Requires an even M (and d >= M/2 + 2).
    """
    rng = np.random.default_rng(seed)
    if placement == ORTHONORMAL:
        if d < M:
            raise ConfigurationError(f"feature dim {d} must be >= class count {M}")
        Q, _ = np.linalg.qr(rng.standard_normal((d, M)))
        return TaskUniverse(means=separation * Q.T.copy(), sigma=sigma)
    if placement != ANTIPODAL_PAIRS:
        raise ConfigurationError(f"unknown mean placement {placement!r}")
    if M % 2 != 0:
        raise ConfigurationError("antipodal-pairs placement needs an even class count")
    pairs = M // 2
    if d < pairs + 2:
        raise ConfigurationError(
            f"antipodal-pairs placement needs feature dim >= {pairs + 2}, got {d}"
        )
    Q, _ = np.linalg.qr(rng.standard_normal((d, pairs + 2)))
    centers = Q[:, :pairs].T  # one center direction per pair
    plane = Q[:, pairs:].T  # shared 2-plane carrying the label axes
    means = np.empty((M, d))
    for t in range(pairs):
        ang = 2.0 * np.pi * t / pairs
        axis = np.cos(ang) * plane[0] + np.sin(ang) * plane[1]
        center = 1.25 * separation * centers[t]
        means[2 * t] = center + 0.5 * separation * axis
        means[2 * t + 1] = center - 0.5 * separation * axis
    return TaskUniverse(means=means, sigma=sigma)


def ground_truth_graph(class_sets: list[tuple[int, ...]]) -> np.ndarray:
    """w*_ij = 1 iff class sets i and j are identical (diagonal included),
    then rows normalized to the simplex."""
    K = len(class_sets)
    raw = np.zeros((K, K))
    for i in range(K):
        for j in range(K):
            raw[i, j] = 1.0 if class_sets[i] == class_sets[j] else 0.0
    return row_normalize(raw)


def sample_class_data(
    universe: TaskUniverse,
    class_set,
    n_train: int,
    n_test: int,
    seed: int | np.random.SeedSequence,
) -> tuple[Dataset, Dataset]:
    """Draw balanced per-class Gaussian samples; labels are local indices
    into the sorted class set."""
    class_set = tuple(sorted(int(c) for c in class_set))
    if not class_set:
        raise ConfigurationError("class_set must not be empty")
    if n_train < len(class_set):
        raise ConfigurationError("need at least one training sample per class")
    rng = np.random.default_rng(seed)

    def draw(total: int, split: str) -> Dataset:
        counts = np.full(len(class_set), total // len(class_set), dtype=int)
        counts[: total % len(class_set)] += 1  # remainder to the first classes
        feats, labs = [], []
        for local, cls in enumerate(class_set):
            x = universe.means[cls] + universe.sigma * rng.standard_normal(
                (counts[local], universe.dim)
            )
            feats.append(x)
            labs.append(np.full(counts[local], local, dtype=int))
        X = np.concatenate(feats)
        y = np.concatenate(labs)
        order = rng.permutation(len(y))
        return Dataset(X[order], y[order], class_set, split=split)

    return draw(n_train, "train"), draw(n_test, "test")


def _spawn(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def _build_datasets(universe, class_sets, n_train, n_test, seeds):
    return [
        sample_class_data(universe, cs, n_train, n_test, s)
        for cs, s in zip(class_sets, seeds)
    ]


def gen_noniid_sbm(
    K: int,
    M: int,
    N: int,
    num_groups: int,
    samples_per_client: int,
    seed: int,
    *,
    test_samples_per_client: int = 100,
    d: int | None = None,
    sigma: float = 1.0,
    separation: float = DEFAULT_SEPARATION,
    placement: str = ORTHONORMAL,
    universe: TaskUniverse | None = None,
) -> tuple[TaskAssignment, list[tuple[Dataset, Dataset]]]:
    """Group-structured tasks: each group owns a disjoint N-class subset and
    every client in a group gets the identical class set."""
    if num_groups * N > M:
        raise ConfigurationError(
            f"{num_groups} groups of {N} classes do not fit in {M} classes"
        )
    if K % num_groups != 0:
        raise ConfigurationError(f"K={K} must be divisible by num_groups={num_groups}")
    assign_seed, uni_seed, *data_seeds = _spawn(seed, 2 + K)
    if universe is None:
        universe = make_universe(
            M, d if d is not None else M, sigma, separation, uni_seed, placement
        )
    rng = np.random.default_rng(assign_seed)
    if placement == ANTIPODAL_PAIRS and N == 2 and M % 2 == 0:
        # keep groups aligned with the antipodal class pairs
        pair_order = rng.permutation(M // 2)
        group_sets = [
            tuple(sorted((int(2 * pair_order[g]), int(2 * pair_order[g] + 1))))
            for g in range(num_groups)
        ]
    else:
        perm = rng.permutation(M)
        group_sets = [
            tuple(sorted(int(c) for c in perm[g * N : (g + 1) * N])) for g in range(num_groups)
        ]
    per_group = K // num_groups
    group_labels = np.repeat(np.arange(num_groups), per_group)
    class_sets = [group_sets[g] for g in group_labels]
    assignment = TaskAssignment(class_sets, ground_truth_graph(class_sets), group_labels)
    data = _build_datasets(universe, class_sets, samples_per_client, test_samples_per_client, data_seeds)
    return assignment, data


def gen_noniid_random(
    K: int,
    M: int,
    N: int,
    samples_per_client: int,
    seed: int,
    *,
    test_samples_per_client: int = 100,
    d: int | None = None,
    sigma: float = 1.0,
    separation: float = DEFAULT_SEPARATION,
    placement: str = ORTHONORMAL,
    universe: TaskUniverse | None = None,
) -> tuple[TaskAssignment, list[tuple[Dataset, Dataset]]]:
    """Independent tasks: every client draws a uniform random N-subset of the
    M classes; identical subsets define the ground-truth cooperation."""
    if N > M:
        raise ConfigurationError(f"cannot assign {N} distinct classes out of {M}")
    assign_seed, uni_seed, *data_seeds = _spawn(seed, 2 + K)
    if universe is None:
        universe = make_universe(
            M, d if d is not None else M, sigma, separation, uni_seed, placement
        )
    rng = np.random.default_rng(assign_seed)
    class_sets = [
        tuple(sorted(int(c) for c in rng.choice(M, size=N, replace=False)))
        for _ in range(K)
    ]
    assignment = TaskAssignment(class_sets, ground_truth_graph(class_sets), None)
    data = _build_datasets(universe, class_sets, samples_per_client, test_samples_per_client, data_seeds)
    return assignment, data
