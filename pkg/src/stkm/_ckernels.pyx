# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport lgamma, log, exp

cnp.import_array()

cdef double THETA_EPS = 1e-12


def project_simplex_rows(V):
    cdef const double[:, ::1] v = np.ascontiguousarray(V, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], k = v.shape[1]
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] u = np.empty(max(k, 1), dtype=np.float64)
    cdef Py_ssize_t r, a, b
    cdef double css, tau, x, cand, top
    with nogil:
        for r in range(n):
            if k == 1:
                o[r, 0] = 1.0
                continue
            # insertion sort, descending; k is small
            for a in range(k):
                x = v[r, a]
                b = a
                while b > 0 and u[b - 1] < x:
                    u[b] = u[b - 1]
                    b -= 1
                u[b] = x
            # shift by the row max to avoid cancellation in the threshold
            top = u[0]
            css = 0.0
            tau = 0.0
            for a in range(k):
                css += u[a] - top
                cand = (css - 1.0) / (a + 1)
                if u[a] - top - cand > 0:
                    tau = cand
            for a in range(k):
                x = (v[r, a] - top) - tau
                o[r, a] = 0.0 if x < 0 else (1.0 if x > 1 else x)
    return out


cdef void _greedy(const double[:, ::1] A, double cut, const long long[::1] order,
                  long long[::1] labels, long long[::1] seeds, long long *ngroups) noexcept nogil:
    cdef Py_ssize_t n = A.shape[0], q, g, p
    cdef long long count = 0
    for q in range(n):
        p = order[q]
        labels[p] = -1
        for g in range(count):
            if A[p, seeds[g]] >= cut:
                labels[p] = g
                break
        if labels[p] < 0:
            labels[p] = count
            seeds[count] = p
            count += 1
    ngroups[0] = count


def greedy_groups(A, double theta, order):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const long long[::1] o = np.ascontiguousarray(order, dtype=np.int64)
    n = a.shape[0]
    labels = np.empty(n, dtype=np.int64)
    cdef long long[::1] lab = labels
    cdef long long[::1] seeds = np.empty(n, dtype=np.int64)
    cdef long long ng = 0
    with nogil:
        _greedy(a, theta - THETA_EPS, o, lab, seeds, &ng)
    return labels


def group_counts(A, thetas, order):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const long long[::1] o = np.ascontiguousarray(order, dtype=np.int64)
    cdef const double[::1] th = np.ascontiguousarray(thetas, dtype=np.float64)
    n = a.shape[0]
    counts = np.empty(th.shape[0], dtype=np.int64)
    cdef long long[::1] c = counts
    cdef long long[::1] lab = np.empty(n, dtype=np.int64)
    cdef long long[::1] seeds = np.empty(n, dtype=np.int64)
    cdef long long ng = 0
    cdef Py_ssize_t s
    with nogil:
        for s in range(th.shape[0]):
            _greedy(a, th[s] - THETA_EPS, o, lab, seeds, &ng)
            c[s] = ng
    return counts


def expected_mutual_info(a, b, long long n):
    cdef const long long[::1] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef const long long[::1] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t r = av.shape[0], s = bv.shape[0], i, j
    cdef long long ai, bj, nij, lo, hi
    cdef double[::1] lf = np.empty(n + 2, dtype=np.float64)
    cdef double emi = 0.0, log_n = log(<double>n), base, log_p
    cdef long long q
    with nogil:
        for q in range(n + 2):
            lf[q] = lgamma(q + 1.0)
        for i in range(r):
            ai = av[i]
            for j in range(s):
                bj = bv[j]
                lo = ai + bj - n
                if lo < 1:
                    lo = 1
                hi = ai if ai < bj else bj
                base = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj] - lf[n]
                nij = lo
                while nij <= hi:
                    log_p = (base - lf[nij] - lf[ai - nij] - lf[bj - nij]
                             - lf[n - ai - bj + nij])
                    emi += (<double>nij / n) * (log(<double>nij) + log_n - log(<double>ai)
                                                - log(<double>bj)) * exp(log_p)
                    nij += 1
    return emi
