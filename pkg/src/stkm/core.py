"""Domain types shared by every stage of the pipeline.

All containers are frozen dataclasses holding read-only numpy arrays, so a
fitted result can be handed to several readers without copying.

Array layouts
-------------
trajectories  ``(T, m, N)``  time x spatial dimension x object
centers       ``(T, m, k)``  time x spatial dimension x cluster
weights       ``(T, k, N)``  time x cluster x object
assignments   ``(T, N)``     hard cluster label per object per time step
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

UNASSIGNED = -1
SIMPLEX_ATOL = 1e-9


class STKMError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(STKMError, ValueError):
    pass


class EmptyInput(ValidationError):
    pass


class NonFiniteCoordinate(ValidationError):
    pass


class DuplicateObservation(ValidationError):
    def __init__(self, duplicates):
        self.duplicates = list(duplicates)
        shown = ", ".join(f"({i!r}, {t!r})" for i, t in self.duplicates[:10])
        super().__init__(f"duplicate observations for cells: {shown}")


class IncompleteGrid(ValidationError):
    """Some (id, time) cells have no observation.

    ``missing`` lists the empty cells as ``(id, time)`` pairs so a
    preprocessing step can fill them.
    """

    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(f"({i!r}, {t!r})" for i, t in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
        super().__init__(f"missing observations for cells: {shown}{more}")


class ShapeMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class KTooLarge(ValidationError):
    pass


class EmptyCluster(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrajectoryTensor:
    """Positions of ``N`` objects in ``m`` dimensions over ``T`` time steps.

    Time is indexed ``0..T-1`` internally; ``timestamps`` keeps the original
    time values for I/O only.
    """

    data: np.ndarray
    point_ids: tuple = None
    timestamps: tuple = None

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3:
            raise ShapeMismatch(f"trajectory data must be 3-d (T, m, N), got shape {data.shape}")
        T, m, N = data.shape
        if T < 2:
            raise ValidationError(f"need at least 2 time steps, got {T}")
        if m < 1 or N < 1:
            raise ValidationError(f"need m >= 1 and N >= 1, got m={m}, N={N}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteCoordinate("trajectory data contains non-finite values")
        ids = tuple(range(N)) if self.point_ids is None else tuple(self.point_ids)
        if len(ids) != N:
            raise ShapeMismatch(f"{len(ids)} point ids for {N} objects")
        if len(set(ids)) != N:
            raise ValidationError("point ids are not unique")
        ts = tuple(float(t) for t in range(T)) if self.timestamps is None else tuple(self.timestamps)
        if len(ts) != T:
            raise ShapeMismatch(f"{len(ts)} timestamps for {T} time steps")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError("timestamps must be strictly increasing")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "point_ids", ids)
        object.__setattr__(self, "timestamps", ts)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def N(self) -> int:
        return self.data.shape[2]

    def shifted(self, offset) -> "TrajectoryTensor":
        offset = np.asarray(offset, dtype=float).reshape(1, -1, 1)
        return TrajectoryTensor(self.data + offset, self.point_ids, self.timestamps)


@dataclass(frozen=True)
class CenterTensor:
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3 or data.shape[2] < 1:
            raise ShapeMismatch(f"center data must be 3-d (T, m, k) with k >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteCoordinate("center data contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def k(self) -> int:
        return self.data.shape[2]

    def check_against(self, X: TrajectoryTensor) -> None:
        if self.data.shape[:2] != X.data.shape[:2]:
            raise ShapeMismatch(
                f"centers shape {self.data.shape} inconsistent with trajectories {X.data.shape}"
            )


@dataclass(frozen=True)
class WeightTensor:
    """Soft memberships; every ``data[t, :, i]`` lies on the probability simplex."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3:
            raise ShapeMismatch(f"weight data must be 3-d (T, k, N), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteCoordinate("weights contain non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError("weights must lie in [0, 1]")
        dev = np.abs(data.sum(axis=1) - 1.0)
        if dev.size and dev.max() > SIMPLEX_ATOL:
            t, i = np.unravel_index(np.argmax(dev), dev.shape)
            raise ValidationError(
                f"weight column (t={t}, i={i}) sums to {data[t, :, i].sum()!r}, not 1"
            )
        object.__setattr__(self, "data", data)

    @property
    def k(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class AssignmentHistory:
    labels: np.ndarray
    k: int = None

    def __post_init__(self):
        labels = np.array(self.labels, copy=True)
        if labels.ndim != 2:
            raise ShapeMismatch(f"assignment history must be 2-d (T, N), got {labels.shape}")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValidationError("assignment labels must be integers")
        labels = labels.astype(np.int64)
        k = int(labels.max()) + 1 if self.k is None and labels.size else self.k
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValidationError(f"assignment labels must lie in 0..{k - 1}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "k", int(k) if k is not None else 0)

    @property
    def T(self) -> int:
        return self.labels.shape[0]

    @property
    def N(self) -> int:
        return self.labels.shape[1]


def canonical_labels(labels) -> np.ndarray:
    """Relabel clusters ``0, 1, ...`` in order of their smallest member index.

    The UNASSIGNED sentinel is left in place.
    """
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full(labels.shape, UNASSIGNED, dtype=np.int64)
    mapping = {}
    for idx, lab in enumerate(labels.tolist()):
        if lab == UNASSIGNED:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[idx] = mapping[lab]
    return out


@dataclass(frozen=True)
class Partition:
    """A static labeling of ``N`` points; ``UNASSIGNED`` (-1) marks outliers."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, copy=True)
        if labels.ndim != 1:
            raise ShapeMismatch("partition labels must be 1-d")
        labels = labels.astype(np.int64)
        if labels.size and labels.min() < UNASSIGNED:
            raise ValidationError("partition labels must be >= -1")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def N(self) -> int:
        return self.labels.shape[0]

    @property
    def n_clusters(self) -> int:
        return len(set(self.labels[self.labels != UNASSIGNED].tolist()))

    def canonical(self) -> "Partition":
        return Partition(canonical_labels(self.labels))

    def key(self) -> tuple:
        """Hashable identity that ignores label names."""
        return tuple(canonical_labels(self.labels).tolist())

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


DISTANCES = ("squared_euclidean", "robust_log")


@dataclass(frozen=True)
class SolverConfig:
    """Phase-1 settings. ``lam`` is the temporal penalty weight (``lambda``)."""

    k: int
    lam: float = 0.8
    d_k: float = 1.1
    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0
    distance: str = "squared_euclidean"
    c_const: float = 1.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        if not (0.0 <= self.lam <= 1.0):
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam!r}")
        if not self.d_k > 1.0:
            raise ConfigError(f"d_k must exceed 1.0, got {self.d_k!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"max_iter must be a positive integer, got {self.max_iter!r}")
        if not self.tol >= 0.0:
            raise ConfigError(f"tol must be non-negative, got {self.tol!r}")
        if self.distance not in DISTANCES:
            raise ConfigError(f"distance must be one of {DISTANCES}, got {self.distance!r}")
        if self.distance == "robust_log" and not self.c_const >= 1.0:
            raise ConfigError(f"c_const must be >= 1 for the robust distance, got {self.c_const!r}")

    @property
    def robust(self) -> bool:
        return self.distance == "robust_log"


@dataclass(frozen=True)
class Phase2Config:
    k_target: int
    theta_grid_step: float = 0.01
    votes_first_round: int = 5
    votes_max: int = 20
    seed: int = 0

    def __post_init__(self):
        if int(self.k_target) != self.k_target or self.k_target < 1:
            raise ConfigError(f"k_target must be a positive integer, got {self.k_target!r}")
        if not (0.0 < self.theta_grid_step <= 1.0):
            raise ConfigError(f"theta_grid_step must lie in (0, 1], got {self.theta_grid_step!r}")
        if self.votes_first_round < 1 or self.votes_first_round > self.votes_max:
            raise ConfigError("need 1 <= votes_first_round <= votes_max")


def validate(records: Iterable[Sequence]) -> TrajectoryTensor:
    """Build a dense tensor from ``(id, position, time)`` records.

    Every (id, time) cell must be observed exactly once. Ids keep their order
    of first appearance, times are sorted.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no records")
    cells = {}
    duplicates = []
    ids = {}
    times = set()
    dim = None
    for pid, pos, t in records:
        pos = np.atleast_1d(np.asarray(pos, dtype=float))
        if dim is None:
            dim = pos.shape[0]
        elif pos.shape[0] != dim:
            raise ShapeMismatch(f"record for id {pid!r} at t={t!r} has {pos.shape[0]} coordinates, expected {dim}")
        if not np.all(np.isfinite(pos)):
            raise NonFiniteCoordinate(f"non-finite coordinate for id {pid!r} at t={t!r}")
        if not math.isfinite(float(t)):
            raise NonFiniteCoordinate(f"non-finite time for id {pid!r}")
        key = (pid, float(t))
        if key in cells:
            duplicates.append((pid, t))
            continue
        cells[key] = pos
        ids.setdefault(pid, None)
        times.add(float(t))
    if duplicates:
        raise DuplicateObservation(duplicates)
    id_list = list(ids)
    time_list = sorted(times)
    missing = [(pid, t) for pid in id_list for t in time_list if (pid, t) not in cells]
    if missing:
        raise IncompleteGrid(missing)
    data = np.empty((len(time_list), dim, len(id_list)))
    for i, pid in enumerate(id_list):
        for s, t in enumerate(time_list):
            data[s, :, i] = cells[(pid, t)]
    return TrajectoryTensor(data, tuple(id_list), tuple(time_list))


def flatten(X: TrajectoryTensor) -> list:
    """Inverse of :func:`validate`: one ``(id, position, time)`` record per cell."""
    out = []
    for s, t in enumerate(X.timestamps):
        for i, pid in enumerate(X.point_ids):
            out.append((pid, X.data[s, :, i].copy(), t))
    return out

