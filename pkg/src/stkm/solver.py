"""Phase 1: alternating minimization of the space-time k-means objective.

The objective over centers ``C`` (T, m, k) and simplex weights ``W`` (T, k, N)
is::

    sum_t sum_j sum_i  w[t,j,i] * dist(x[t,i], c[t,j])
        + N * lam * sum_{t<T-1} sum_j |c[t,j] - c[t+1,j]|^2

Centers are refreshed with a backward Gauss-Seidel sweep that couples each
``c[t]`` to the already-updated ``c[t+1]``; weights take one proximal step
of size ``1/d_k`` followed by projection onto the simplex.

Functions accept either the typed containers from :mod:`stkm.core` or raw
arrays of the documented shapes; raw arrays may have ``T == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._backend import kernels
from .core import (
    CenterTensor,
    ConfigError,
    KTooLarge,
    ShapeMismatch,
    SolverConfig,
    TrajectoryTensor,
    WeightTensor,
)

DEGENERATE_EPS = 1e-12


def _arr(obj) -> np.ndarray:
    if isinstance(obj, (TrajectoryTensor, CenterTensor, WeightTensor)):
        return obj.data
    return np.asarray(obj, dtype=np.float64)


def _check_shapes(X, C, W):
    if X.ndim != 3 or C.ndim != 3 or W.ndim != 3:
        raise ShapeMismatch("X, C and W must all be 3-d arrays")
    T, m, N = X.shape
    if C.shape[:2] != (T, m):
        raise ShapeMismatch(f"centers shape {C.shape} does not match trajectories {X.shape}")
    if W.shape != (T, C.shape[2], N):
        raise ShapeMismatch(f"weights shape {W.shape}, expected {(T, C.shape[2], N)}")


def squared_distances(X, C) -> np.ndarray:
    """``|x[t,i] - c[t,j]|^2`` as a (T, k, N) array."""
    X, C = _arr(X), _arr(C)
    diff = X[:, :, None, :] - C[:, :, :, None]
    return np.einsum("tmkn,tmkn->tkn", diff, diff)


def distances(X, C, distance="squared_euclidean", c_const=1.0) -> np.ndarray:
    sq = squared_distances(X, C)
    if distance == "robust_log":
        return np.log(c_const + sq)
    return sq


def objective(X, C, W, lam, distance="squared_euclidean", c_const=1.0) -> float:
    """Value of the unified objective; the temporal term is scaled by ``N``."""
    X, C, W = _arr(X), _arr(C), _arr(W)
    _check_shapes(X, C, W)
    N = X.shape[2]
    data_term = np.sum(W * distances(X, C, distance, c_const))
    step = C[1:] - C[:-1]
    return float(data_term + N * lam * np.sum(step * step))


def cluster_objectives(X, C, W, lam) -> np.ndarray:
    """Per-cluster split of the squared-distance objective (sums to it)."""
    X, C, W = _arr(X), _arr(C), _arr(W)
    N = X.shape[2]
    data_term = np.einsum("tkn,tkn->k", W, squared_distances(X, C))
    step = C[1:] - C[:-1]
    return data_term + N * lam * np.einsum("tmk,tmk->k", step, step)


def _repair_empty(Xt, centers_t, degenerate):
    """Move each degenerate center onto the point farthest from its best live center."""
    live = ~degenerate
    diff = Xt[:, None, :] - centers_t[:, live, None]
    best = np.einsum("mkn,mkn->kn", diff, diff).min(axis=0)
    for j in np.flatnonzero(degenerate):
        far = int(np.argmax(best))
        centers_t[:, j] = Xt[:, far]
        d = Xt - Xt[:, far : far + 1]
        best = np.minimum(best, np.einsum("mn,mn->n", d, d))


def update_centers(X, C, W, lam) -> np.ndarray:
    """Backward Gauss-Seidel center sweep.

    For ``t = T-1 .. 0``::

        c[t,j] = (sum_i w[t,j,i] x[t,i] + N lam c[t+1,j]) / (sum_i w[t,j,i] + N lam)

    using the freshly updated ``c[t+1,j]``; the last step has no successor and
    reduces to the weighted centroid. A cluster whose denominator vanishes is
    re-seeded at the point farthest from its nearest live center.
    """
    X, C, W = _arr(X), _arr(C), _arr(W)
    _check_shapes(X, C, W)
    T, m, N = X.shape
    nl = N * lam
    S = W.sum(axis=2)
    WX = np.einsum("tmn,tkn->tmk", X, W)
    out = np.empty_like(C)
    for t in range(T - 1, -1, -1):
        if t == T - 1:
            num, den = WX[t], S[t]
        else:
            num, den = WX[t] + nl * out[t + 1], S[t] + nl
        degenerate = den < DEGENERATE_EPS
        out[t] = num / np.where(degenerate, 1.0, den)
        if degenerate.any():
            _repair_empty(X[t], out[t], degenerate)
    return out


def coupled_center_sweep(X, C, W, lam) -> np.ndarray:
    """Exact block minimization of each ``c[t,j]`` given both time neighbours.

    Never increases the objective; the fitter falls back to it whenever the
    forward-coupled sweep of :func:`update_centers` would.
    """
    X, C, W = _arr(X), _arr(C), _arr(W)
    T, m, N = X.shape
    nl = N * lam
    S = W.sum(axis=2)
    WX = np.einsum("tmn,tkn->tmk", X, W)
    out = C.copy()
    for t in range(T - 1, -1, -1):
        num, den = WX[t].copy(), S[t].copy()
        if t < T - 1:
            num += nl * out[t + 1]
            den += nl
        if t > 0:
            num += nl * out[t - 1]
            den += nl
        ok = den > DEGENERATE_EPS
        out[t] = np.where(ok, num / np.where(ok, den, 1.0), out[t])
    return out


def robust_center_step(X, C, W, lam, c_const) -> np.ndarray:
    """One backward sweep of block gradient steps on the log-distance objective.

    Block ``(t, j)`` moves by ``-grad / L`` with
    ``L = 2 sum_i w[t,j,i] / c_const + 2 N lam * (number of time neighbours)``,
    an upper bound on the block curvature, so no step raises the objective.
    """
    X, C, W = _arr(X), _arr(C), _arr(W)
    T, m, N = X.shape
    nl = N * lam
    S = W.sum(axis=2)
    out = C.copy()
    for t in range(T - 1, -1, -1):
        diff = X[t][:, None, :] - out[t][:, :, None]
        sq = np.einsum("mkn,mkn->kn", diff, diff)
        grad = -2.0 * np.einsum("kn,mkn->mk", W[t] / (c_const + sq), diff)
        neighbours = 0
        if t < T - 1:
            grad += 2.0 * nl * (out[t] - out[t + 1])
            neighbours += 1
        if t > 0:
            grad += 2.0 * nl * (out[t] - out[t - 1])
            neighbours += 1
        L = 2.0 * S[t] / c_const + 2.0 * nl * neighbours
        step = np.where(L > 0, 1.0 / np.where(L > 0, L, 1.0), 0.0)
        out[t] = out[t] - grad * step
    return out


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    v = np.asarray(v, dtype=np.float64)
    return kernels.project_simplex_rows(v.reshape(1, -1))[0]


def update_weights(X, C, W, d_k, distance="squared_euclidean", c_const=1.0) -> np.ndarray:
    """Proximal weight step: ``W[t,:,i] <- proj(W[t,:,i] - dist[t,:,i] / d_k)``."""
    X, C, W = _arr(X), _arr(C), _arr(W)
    _check_shapes(X, C, W)
    T, k, N = W.shape
    V = W - distances(X, C, distance, c_const) / d_k
    rows = np.ascontiguousarray(V.transpose(0, 2, 1)).reshape(T * N, k)
    P = kernels.project_simplex_rows(rows)
    return np.ascontiguousarray(P.reshape(T, N, k).transpose(0, 2, 1))


def _kmeanspp(points, k, rng, potential):
    """Greedy k-means++ over the rows of ``points``; returns seed indices."""
    n = points.shape[0]
    n_local = 2 + int(np.log(k))

    def pot_to(idx):
        d = points[None, :, :] - points[np.atleast_1d(idx)][:, None, :]
        return potential(np.einsum("cnm,cnm->cn", d, d))

    chosen = [int(rng.integers(n))]
    closest = pot_to(chosen[0])[0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            rest = np.setdiff1d(np.arange(n), chosen)
            chosen.append(int(rng.choice(rest)))
        else:
            draws = rng.random(n_local) * total
            cand = np.searchsorted(np.cumsum(closest), draws, side="right")
            cand = np.minimum(cand, n - 1)
            trial = np.minimum(closest[None, :], pot_to(cand))
            best = int(np.argmin(trial.sum(axis=1)))
            chosen.append(int(cand[best]))
        closest = np.minimum(closest, pot_to(chosen[-1])[0])
    return chosen


def init(X, k, seed=0, distance="squared_euclidean", c_const=1.0):
    """k-means++ seeds on the first frame, held fixed over time; uniform weights.

    Seeding potentials use the configured dissimilarity, shifted so a point
    has zero potential with respect to itself.
    """
    X = _arr(X)
    T, m, N = X.shape
    if k > N:
        raise KTooLarge(f"k={k} exceeds the number of objects N={N}")
    if k < 1:
        raise ConfigError("k must be positive")
    rng = np.random.default_rng(seed)
    if distance == "robust_log":
        potential = lambda sq: np.log1p(sq / c_const)  # noqa: E731
    else:
        potential = lambda sq: sq  # noqa: E731
    seeds = _kmeanspp(X[0].T, k, rng, potential)
    C0 = np.repeat(X[0][:, seeds][None, :, :], T, axis=0)
    W0 = np.full((T, k, N), 1.0 / k)
    return C0, W0


@dataclass(frozen=True)
class FitResult:
    centers: CenterTensor
    weights: WeightTensor
    objective_trace: tuple
    iterations: int
    converged: bool

    @property
    def labels(self) -> np.ndarray:
        """Hard labels (T, N), smallest index on ties."""
        return np.argmax(self.weights.data, axis=1)


def fit(
    X,
    config: SolverConfig,
    initial: Optional[tuple] = None,
    callback: Optional[Callable] = None,
) -> FitResult:
    """Alternate weight and center updates until the relative objective change
    drops below ``config.tol`` or ``config.max_iter`` sweeps have run.

    Each sweep takes the proximal weight step against the current centers and
    then refreshes the centers, so the k-means++ seeds drive the first
    assignment instead of being averaged away by the uniform initial weights.

    ``initial`` overrides the k-means++ start with a ``(C, W)`` pair.
    ``callback(iteration, C, W)`` is invoked after every accepted sweep.

    The recorded objective never increases. With the weights fixed the
    objective splits into independent per-cluster terms; any cluster whose
    term the forward-coupled sweep would raise is refreshed with
    :func:`coupled_center_sweep` instead, which is a descent step by
    construction. If
    even that does not lower the objective (floating-point stall) the
    iteration stops with the previous iterate.
    """
    Xa = _arr(X)
    if Xa.ndim != 3:
        raise ShapeMismatch("trajectories must be 3-d (T, m, N)")
    dist, cc = config.distance, config.c_const
    if initial is None:
        C, W = init(Xa, config.k, config.seed, dist, cc)
    else:
        C = np.array(_arr(initial[0]), dtype=np.float64)
        W = np.array(_arr(initial[1]), dtype=np.float64)
        _check_shapes(Xa, C, W)
        if C.shape[2] != config.k:
            raise ShapeMismatch(f"initial centers have k={C.shape[2]}, config says k={config.k}")
    lam, d_k = config.lam, config.d_k
    J = objective(Xa, C, W, lam, dist, cc)
    trace = []
    converged = False
    for it in range(config.max_iter):
        W_new = update_weights(Xa, C, W, d_k, dist, cc)
        if config.robust:
            C_new = robust_center_step(Xa, C, W_new, lam, cc)
            J_new = objective(Xa, C_new, W_new, lam, dist, cc)
        else:
            C_new = update_centers(Xa, C, W_new, lam)
            worse = cluster_objectives(Xa, C_new, W_new, lam) > cluster_objectives(Xa, C, W_new, lam)
            if worse.any():
                C_safe = coupled_center_sweep(Xa, C, W_new, lam)
                C_new[:, :, worse] = C_safe[:, :, worse]
            J_new = objective(Xa, C_new, W_new, lam)
        if J_new > J:
            trace.append(J)
            converged = True
            break
        C, W = C_new, W_new
        trace.append(J_new)
        if callback is not None:
            callback(it, C, W)
        rel = (J - J_new) / max(abs(J), np.finfo(float).tiny)
        J = J_new
        if rel < config.tol or J == 0.0:
            converged = True
            break
    return FitResult(
        centers=CenterTensor(C),
        weights=WeightTensor(W),
        objective_trace=tuple(trace),
        iterations=len(trace),
        converged=converged,
    )


def fit_robust(X, config: SolverConfig, initial=None, callback=None) -> FitResult:
    """:func:`fit` under the ``log(c_const + |x - c|^2)`` dissimilarity."""
    if not config.robust:
        raise ConfigError("fit_robust needs distance='robust_log'")
    return fit(X, config, initial=initial, callback=callback)
