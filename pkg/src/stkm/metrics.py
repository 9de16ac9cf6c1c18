"""Adjusted mutual information and the two evaluation protocols.

``total_ami`` scores the full per-step assignment history against the static
ground truth repeated over time; ``long_term_ami`` scores a static partition.
In both, every UNASSIGNED ground-truth entry is given its own label so noise
is never counted as one cluster.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .core import UNASSIGNED, AssignmentHistory, LengthMismatch, Partition, ShapeMismatch


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    n: int

    @classmethod
    def from_labels(cls, labels_a, labels_b) -> "ContingencyTable":
        a = np.asarray(labels_a)
        b = np.asarray(labels_b)
        if a.shape != b.shape or a.ndim != 1:
            raise LengthMismatch(f"label vectors of shapes {a.shape} and {b.shape}")
        _, ia = np.unique(a, return_inverse=True)
        _, ib = np.unique(b, return_inverse=True)
        r, s = ia.max() + 1, ib.max() + 1
        counts = np.bincount(ia * s + ib, minlength=r * s).reshape(r, s)
        return cls(counts, counts.sum(axis=1), counts.sum(axis=0), int(a.size))


# Sums below run over sorted terms so the result is bit-identical under
# relabeling of either argument and under swapping the two arguments.

def _entropy(marginal, n) -> float:
    p = np.sort(marginal[marginal > 0]) / n
    return float(-np.sum(p * np.log(p)))


def mutual_info(table: ContingencyTable) -> float:
    n = table.n
    i, j = np.nonzero(table.counts)
    nij = table.counts[i, j].astype(np.float64)
    terms = nij / n * (np.log(nij) + np.log(n) - (np.log(table.rows[i]) + np.log(table.cols[j])))
    return float(np.sort(terms).sum())


def expected_mutual_info(table: ContingencyTable) -> float:
    """E[MI] under random permutations with the observed marginals."""
    a, b = np.sort(table.rows), np.sort(table.cols)
    if (a.size, a.tolist()) > (b.size, b.tolist()):
        a, b = b, a
    return float(kernels.expected_mutual_info(a, b, table.n))


def ami(labels_a, labels_b) -> float:
    """Adjusted mutual information, arithmetic-mean normalization, natural log.

    Identical labelings (up to renaming) score 1. A labeling with a single
    cluster carries no information, so any pair involving one scores 0,
    including two constant labelings.
    """
    table = ContingencyTable.from_labels(labels_a, labels_b)
    r, s = table.counts.shape
    if r == 1 or s == 1:
        return 0.0
    if r == s == np.count_nonzero(table.counts):
        return 1.0
    mi = mutual_info(table)
    emi = expected_mutual_info(table)
    h_a, h_b = _entropy(table.rows, table.n), _entropy(table.cols, table.n)
    denom = 0.5 * (h_a + h_b) - emi
    if abs(denom) < 1e-15:
        return 0.0
    return min((mi - emi) / denom, 1.0)


def relabel_unassigned_unique(labels) -> np.ndarray:
    """Give every UNASSIGNED entry a fresh label unused anywhere else."""
    labels = np.array(labels, dtype=np.int64, copy=True)
    mask = labels == UNASSIGNED
    if mask.any():
        live = labels[~mask]
        start = int(live.max()) + 1 if live.size else 0
        labels[mask] = start + np.arange(np.count_nonzero(mask))
    return labels


def _partition_labels(p) -> np.ndarray:
    return p.labels if isinstance(p, Partition) else np.asarray(p, dtype=np.int64)


def total_ami(assignments, ground_truth) -> float:
    """AMI between the flattened (T*N) history and the truth tiled T times."""
    hist = assignments.labels if isinstance(assignments, AssignmentHistory) else np.asarray(assignments)
    truth = _partition_labels(ground_truth)
    if hist.ndim != 2 or hist.shape[1] != truth.shape[0]:
        raise ShapeMismatch(f"history of shape {hist.shape} vs {truth.shape[0]} ground-truth labels")
    flat = relabel_unassigned_unique(hist.reshape(-1))
    tiled = relabel_unassigned_unique(np.tile(truth, hist.shape[0]))
    return ami(flat, tiled)


def long_term_ami(predicted, ground_truth) -> float:
    pred = _partition_labels(predicted)
    truth = _partition_labels(ground_truth)
    if pred.shape != truth.shape:
        raise ShapeMismatch(f"{pred.shape[0]} predicted labels vs {truth.shape[0]} ground-truth labels")
    return ami(relabel_unassigned_unique(pred), relabel_unassigned_unique(truth))
