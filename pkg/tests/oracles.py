"""Reference computations written independently of the package internals.

Nothing here imports from ``stkm``; each oracle follows the textbook
definition as directly as possible, favouring clarity over speed.
"""
import itertools
import math
from collections import Counter

import numpy as np


# ---------------------------------------------------------------- simplex

def simplex_grid_oracle(v, res=1e-4):
    """argmin_{p in simplex} |p - v|^2 by grid search, final resolution ``res``.

    The objective is convex, so a coarse-to-fine search that re-centres a
    small window on the incumbent reaches the fine-grid minimizer.
    """
    v = np.asarray(v, dtype=float)
    k = v.size
    if k == 2:
        p1 = np.linspace(0.0, 1.0, int(round(1 / res)) + 1)
        f = (p1 - v[0]) ** 2 + (1 - p1 - v[1]) ** 2
        a = p1[np.argmin(f)]
        return np.array([a, 1 - a])
    if k != 3:
        raise ValueError("grid oracle is for k <= 3")
    best = None
    lo1, hi1, lo2, hi2 = 0.0, 1.0, 0.0, 1.0
    for step in (1e-2, 1e-3, res):
        g1 = np.arange(lo1, hi1 + step / 2, step)
        g2 = np.arange(lo2, hi2 + step / 2, step)
        P1, P2 = np.meshgrid(g1, g2, indexing="ij")
        P3 = 1.0 - P1 - P2
        ok = P3 >= -1e-12
        f = (P1 - v[0]) ** 2 + (P2 - v[1]) ** 2 + (np.maximum(P3, 0) - v[2]) ** 2
        f = np.where(ok, f, np.inf)
        i, j = np.unravel_index(np.argmin(f), f.shape)
        best = (P1[i, j], P2[i, j])
        lo1, hi1 = max(0.0, best[0] - 3 * step), min(1.0, best[0] + 3 * step)
        lo2, hi2 = max(0.0, best[1] - 3 * step), min(1.0, best[1] + 3 * step)
    return np.array([best[0], best[1], max(0.0, 1.0 - best[0] - best[1])])


def simplex_active_set_oracle(v):
    """Exact projection by enumerating every support set.

    On a support S the KKT conditions give p_S = v_S - (sum v_S - 1) / |S|;
    the answer is the feasible candidate closest to v.
    """
    v = np.asarray(v, dtype=float)
    k = v.size
    best, best_f = None, np.inf
    for r in range(1, k + 1):
        for S in itertools.combinations(range(k), r):
            S = list(S)
            p = np.zeros(k)
            p[S] = v[S] - (v[S].sum() - 1.0) / r
            if p.min() < 0:
                continue
            f = float(np.sum((p - v) ** 2))
            if f < best_f:
                best, best_f = p, f
    return best


# ---------------------------------------------------------------- AMI

def contingency(a, b):
    return Counter(zip(list(a), list(b)))


def entropy(labels):
    n = len(labels)
    return -sum(c / n * math.log(c / n) for c in Counter(labels).values())


def mutual_info(a, b):
    n = len(a)
    ca, cb = Counter(a), Counter(b)
    return sum(nij / n * math.log(n * nij / (ca[i] * cb[j])) for (i, j), nij in contingency(a, b).items())


def expected_mutual_info(a, b):
    """Closed-form hypergeometric sum with exact binomial coefficients."""
    n = len(a)
    total = 0.0
    for ai in Counter(a).values():
        for bj in Counter(b).values():
            for nij in range(max(1, ai + bj - n), min(ai, bj) + 1):
                prob = math.comb(ai, nij) * math.comb(n - ai, bj - nij) / math.comb(n, bj)
                total += nij / n * math.log(n * nij / (ai * bj)) * prob
    return total


def ami(a, b):
    a, b = list(a), list(b)
    mi = mutual_info(a, b)
    emi = expected_mutual_info(a, b)
    return (mi - emi) / (0.5 * (entropy(a) + entropy(b)) - emi)


def emi_monte_carlo(a, b, shuffles, rng):
    """Mean and standard error of MI over random permutations of ``b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    n = a.size
    ra = np.bincount(ia)
    rb = np.bincount(ib)
    vals = np.empty(shuffles)
    for s in range(shuffles):
        pb = ib[rng.permutation(n)]
        tab = np.bincount(ia * len(ub) + pb, minlength=len(ua) * len(ub)).reshape(len(ua), len(ub))
        i, j = np.nonzero(tab)
        nij = tab[i, j]
        vals[s] = np.sum(nij / n * np.log(n * nij / (ra[i] * rb[j])))
    return vals.mean(), vals.std(ddof=1) / math.sqrt(shuffles)


# ---------------------------------------------------------------- phase 2

def agreement(a_i, a_j):
    return sum(1 for x, y in zip(a_i, a_j) if x == y) / len(a_i)


def canonical(labels):
    seen = {}
    return tuple(seen.setdefault(l, len(seen)) for l in labels)
