# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Must stay operation-for-operation identical to _pykernels."""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.int64_t i64


def element_positions(const i64[::1] cycle, const i64[::1] indptr,
                      const i64[::1] indices, Py_ssize_t n):
    """Slots at which each element is probed, as CSR (ptr, slots), slots ascending."""
    cdef Py_ssize_t N = cycle.shape[0]
    cdef Py_ssize_t t, j, e, c
    cdef i64[::1] ptr = np.zeros(n + 1, dtype=np.int64)
    for t in range(N):
        c = cycle[t]
        if c < 0:
            continue
        for j in range(indptr[c], indptr[c + 1]):
            ptr[indices[j] + 1] += 1
    for e in range(n):
        ptr[e + 1] += ptr[e]
    cdef i64[::1] fill = np.array(ptr[:n], dtype=np.int64)
    cdef i64[::1] slots = np.empty(ptr[n], dtype=np.int64)
    for t in range(N):
        c = cycle[t]
        if c < 0:
            continue
        for j in range(indptr[c], indptr[c + 1]):
            e = indices[j]
            slots[fill[e]] = t
            fill[e] += 1
    return np.asarray(ptr), np.asarray(slots)


def deterministic_profile(const i64[::1] cycle, const i64[::1] indptr,
                          const i64[::1] indices, const double[::1] weights):
    """Per-element max/total detection time and per-slot weighted sum/max.

    Returns (mt, tsum, ee, me). Uncovered elements get infinite rows.
    """
    cdef Py_ssize_t n = weights.shape[0]
    cdef Py_ssize_t N = cycle.shape[0]
    ptr_arr, slots_arr = element_positions(cycle, indptr, indices, n)
    cdef i64[::1] ptr = ptr_arr
    cdef i64[::1] slots = slots_arr
    cdef double[::1] mt = np.empty(n)
    cdef double[::1] tsum = np.empty(n)
    cdef double[::1] ee = np.zeros(N)
    cdef double[::1] me = np.zeros(N)
    cdef Py_ssize_t e, j, k, lo, hi, t, s
    cdef i64 prev, nxt, gap, gmax, total
    cdef double w, v
    for e in range(n):
        w = weights[e]
        lo = ptr[e]
        hi = ptr[e + 1]
        if lo == hi:
            mt[e] = INFINITY
            tsum[e] = INFINITY
            for t in range(N):
                ee[t] += INFINITY
                me[t] = INFINITY
            continue
        gmax = 0
        total = 0
        for j in range(lo, hi):
            nxt = slots[j]
            prev = slots[hi - 1] - N if j == lo else slots[j - 1]
            gap = nxt - prev
            if gap > gmax:
                gmax = gap
            total += gap * (gap + 1) // 2
        mt[e] = <double>gmax
        tsum[e] = <double>total
        # walk slots in increasing order so ee[t] sees elements in index order
        k = lo
        for t in range(N):
            while k < hi and slots[k] < t:
                k += 1
            nxt = slots[k] if k < hi else slots[lo] + N
            v = w * <double>(nxt - t + 1)
            ee[t] += v
            if v > me[t]:
                me[t] = v
    return np.asarray(mt), np.asarray(tsum), np.asarray(ee), np.asarray(me)


def accumulate_row(const double[::1] row, double w, double[::1] ee, double[::1] me):
    """Fold one element's detection-time row into the per-slot aggregates."""
    cdef Py_ssize_t t, N = row.shape[0]
    cdef double v, rmax = -INFINITY, rsum = 0.0
    for t in range(N):
        v = w * row[t]
        ee[t] += v
        if v > me[t]:
            me[t] = v
        if row[t] > rmax:
            rmax = row[t]
        rsum += row[t]
    return rmax, rsum


def probabilistic_row(const double[::1] pi):
    """Expected detection time from every slot given per-slot success probabilities."""
    cdef Py_ssize_t t, k, N = pi.shape[0]
    cdef double[::1] out = np.empty(N)
    cdef double rho = 1.0, acc = 0.0, pk
    for k in range(N):
        pk = pi[k] * rho
        acc += (k + 1) * pk
        rho *= 1.0 - pi[k]
    if rho >= 1.0:
        for t in range(N):
            out[t] = INFINITY
        return np.asarray(out)
    cdef double nxt = (acc + rho * N) / (1.0 - rho)
    for t in range(N - 1, -1, -1):
        nxt = 1.0 + (1.0 - pi[t]) * nxt
        out[t] = nxt
    return np.asarray(out)


def kt_best(const i64[::1] indptr, const i64[::1] indices,
            const double[::1] weights, const i64[::1] x):
    """Index of the test maximising sum of w_e * x_e^2 (first one on ties)."""
    cdef Py_ssize_t i, j, m = indptr.shape[0] - 1, best = -1
    cdef double y, v = 0.0, xe
    for i in range(m):
        y = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            xe = <double>x[indices[j]]
            y += weights[indices[j]] * xe * xe
        if y > v:
            best = i
            v = y
    return best
