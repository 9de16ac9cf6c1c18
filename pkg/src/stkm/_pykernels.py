"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used
when the extension is not built or when ``STKM_PURE_PYTHON=1`` is set.
"""
import numpy as np
from scipy.special import gammaln

# similarity entries are count / T, thresholds are grid multiples; absorb rounding
THETA_EPS = 1e-12


def project_simplex_rows(V):
    """Euclidean projection of every row of ``V`` onto the probability simplex."""
    V = np.ascontiguousarray(V, dtype=np.float64)
    n, k = V.shape
    if k == 1:
        return np.ones_like(V)
    # the projection is shift invariant; centring on the row max avoids
    # cancellation in the threshold when entries are large and close
    V = V - V.max(axis=1, keepdims=True)
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, k + 1, dtype=np.float64)
    cond = U - css / ind > 0
    rho = k - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(n), rho] / (rho + 1.0)
    return np.clip(V - tau[:, None], 0.0, 1.0)


def greedy_groups(A, theta, order):
    """Seed-based greedy grouping; labels are numbered in seed-creation order."""
    n = A.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    seeds = []
    cut = theta - THETA_EPS
    for p in order:
        if seeds:
            hits = np.flatnonzero(A[p, seeds] >= cut)
            if hits.size:
                labels[p] = hits[0]
                continue
        labels[p] = len(seeds)
        seeds.append(p)
    return labels


def group_counts(A, thetas, order):
    """Number of groups produced by :func:`greedy_groups` for each threshold."""
    return np.array([greedy_groups(A, th, order).max() + 1 for th in thetas], dtype=np.int64)


def expected_mutual_info(a, b, n):
    """E[MI] of two labelings with marginals ``a`` and ``b`` under the
    hypergeometric (permutation) model, natural log."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    lf = gammaln(np.arange(n + 2, dtype=np.float64) + 1.0)  # lf[q] = log q!
    log_n = np.log(n)
    emi = 0.0
    for ai in a.tolist():
        for bj in b.tolist():
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1)
            term1 = nij / n
            term2 = np.log(nij) + log_n - np.log(ai) - np.log(bj)
            log_p = (
                lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj] - lf[n]
                - lf[nij] - lf[ai - nij] - lf[bj - nij] - lf[n - ai - bj + nij]
            )
            emi += float(np.sum(term1 * term2 * np.exp(log_p)))
    return emi
