"""Phase 2: static long-term clusters from per-step assignment histories.

Two objects are similar when they carry the same label at many of the same
time steps. Objects are grouped greedily at a similarity threshold, the
threshold is searched to hit a target cluster count, and the order
dependence of the greedy pass is voted away over random shuffles.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .core import (
    UNASSIGNED,
    AssignmentHistory,
    CenterTensor,
    ConfigError,
    EmptyCluster,
    LengthMismatch,
    Partition,
    Phase2Config,
    ShapeMismatch,
    TrajectoryTensor,
    ValidationError,
    WeightTensor,
)


@dataclass(frozen=True)
class SimilarityMatrix:
    data: np.ndarray
    n_steps: int

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ShapeMismatch("similarity matrix must be square")
        if not np.array_equal(data, data.T):
            raise ValidationError("similarity matrix must be symmetric")
        if not np.all(np.diag(data) == 1.0):
            raise ValidationError("similarity matrix must have a unit diagonal")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError("similarity entries must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def N(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class Phase2Result:
    partition: Partition
    theta: float
    runs: int
    votes: int


def _matrix(A) -> np.ndarray:
    return A.data if isinstance(A, SimilarityMatrix) else np.asarray(A, dtype=np.float64)


def extract_assignments(W) -> AssignmentHistory:
    """Hard label per object and step; ties go to the smallest cluster index."""
    data = W.data if isinstance(W, WeightTensor) else np.asarray(W)
    return AssignmentHistory(np.argmax(data, axis=1), k=data.shape[1])


def similarity(a_i, a_j) -> float:
    """Fraction of time steps at which the two histories carry the same label."""
    a_i, a_j = np.asarray(a_i), np.asarray(a_j)
    if a_i.shape != a_j.shape or a_i.ndim != 1:
        raise LengthMismatch(f"histories of shapes {a_i.shape} and {a_j.shape}")
    return int(np.count_nonzero(a_i == a_j)) / a_i.shape[0]


def similarity_matrix(assignments) -> SimilarityMatrix:
    labels = assignments.labels if isinstance(assignments, AssignmentHistory) else np.asarray(assignments)
    T, N = labels.shape
    counts = np.zeros((N, N))
    for value in np.unique(labels):
        onehot = (labels == value).astype(np.float64)
        counts += onehot.T @ onehot
    return SimilarityMatrix(counts / T, T)


def theta_grid(step: float) -> np.ndarray:
    """``0, step, 2 step, ...`` up to and including 1."""
    n = int(np.floor(1.0 / step + 1e-9))
    grid = np.arange(n + 1, dtype=np.float64) * step
    if grid[-1] < 1.0 - 1e-12:
        grid = np.append(grid, 1.0)
    return np.minimum(grid, 1.0)


def effective_step(step: float, n_steps: int) -> float:
    # similarities are multiples of 1/T; a finer grid cannot miss a distinct count
    return min(step, 1.0 / (2.0 * n_steps))


def cluster_at_theta(A, theta: float, order=None) -> Partition:
    """Seed-based greedy grouping at threshold ``theta``.

    Objects are visited in ``order``; each joins the first existing group whose
    seed object is at least ``theta``-similar, otherwise it seeds a new group.
    Labels follow seed-creation order.
    """
    M = _matrix(A)
    order = np.arange(M.shape[0]) if order is None else np.asarray(order, dtype=np.int64)
    return Partition(kernels.greedy_groups(np.ascontiguousarray(M), float(theta), order))


def search_theta(A, k_target: int, order=None, step: float = 0.01):
    """Smallest grid threshold giving exactly ``k_target`` groups.

    If no threshold does, the one whose group count is closest wins, ties
    toward the smaller threshold.
    """
    M = np.ascontiguousarray(_matrix(A))
    order = np.arange(M.shape[0]) if order is None else np.asarray(order, dtype=np.int64)
    grid = theta_grid(step)
    counts = kernels.group_counts(M, grid, order)
    exact = np.flatnonzero(counts == k_target)
    idx = int(exact[0]) if exact.size else int(np.argmin(np.abs(counts - k_target)))
    theta = float(grid[idx])
    return theta, cluster_at_theta(M, theta, order)


def run_phase2(assignments, config: Phase2Config) -> Phase2Result:
    """Majority vote over shuffled threshold searches.

    ``votes_first_round`` shuffles are run first; further shuffles are added
    one at a time until some partition holds a strict majority or
    ``votes_max`` runs have been made, after which the most frequent partition
    (earliest on ties) is returned.
    """
    history = assignments if isinstance(assignments, AssignmentHistory) else AssignmentHistory(assignments)
    if config.k_target > history.N:
        raise ConfigError(f"k_target={config.k_target} exceeds N={history.N}")
    A = similarity_matrix(history)
    step = effective_step(config.theta_grid_step, history.T)
    rng = np.random.default_rng(config.seed)
    votes = Counter()
    first = {}
    for run in range(config.votes_max):
        order = rng.permutation(history.N)
        theta, part = search_theta(A, config.k_target, order, step)
        key = part.key()
        votes[key] += 1
        first.setdefault(key, (run, theta))
        runs = run + 1
        if runs >= config.votes_first_round:
            key, count = max(votes.items(), key=lambda kv: (kv[1], -first[kv[0]][0]))
            if 2 * count > runs:
                break
    key, count = max(votes.items(), key=lambda kv: (kv[1], -first[kv[0]][0]))
    return Phase2Result(Partition(np.array(key)), first[key][1], runs, count)


def long_term_clusters(assignments, config: Phase2Config) -> Partition:
    return run_phase2(assignments, config).partition


def long_term_center_paths(X, partition: Partition) -> CenterTensor:
    """Mean member position per long-term cluster at every step."""
    data = X.data if isinstance(X, TrajectoryTensor) else np.asarray(X, dtype=np.float64)
    labels = partition.labels
    if labels.shape[0] != data.shape[2]:
        raise ShapeMismatch(f"partition has {labels.shape[0]} labels for {data.shape[2]} objects")
    live = labels[labels != UNASSIGNED]
    if live.size == 0:
        raise EmptyCluster("partition has no assigned points")
    K = int(live.max()) + 1
    paths = np.empty((data.shape[0], data.shape[1], K))
    for c in range(K):
        members = labels == c
        if not members.any():
            raise EmptyCluster(f"long-term cluster {c} has no members")
        paths[:, :, c] = data[:, :, members].mean(axis=2)
    return CenterTensor(paths)
