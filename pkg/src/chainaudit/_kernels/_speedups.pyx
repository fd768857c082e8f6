# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations (C++).

Same contracts as ``_pure``; fee-rate comparisons use 128-bit cross
multiplication, so they are exact for fees and sizes up to 2^63.
"""

import numpy as np

from libc.stdint cimport int64_t

cdef extern from *:
    """
    #include <algorithm>
    #include <cstdint>

    static void feerate_stable_sort(int64_t* idx, size_t n, const int64_t* fee,
                                    const int64_t* vsize, const int64_t* recv,
                                    const int64_t* tie) {
        std::stable_sort(idx, idx + n, [&](int64_t a, int64_t b) {
            __int128 lhs = (__int128)fee[a] * vsize[b];
            __int128 rhs = (__int128)fee[b] * vsize[a];
            if (lhs != rhs) return lhs > rhs;
            if (recv[a] != recv[b]) return recv[a] < recv[b];
            return tie[a] < tie[b];
        });
    }

    static inline int rate_gt(int64_t fa, int64_t va, int64_t fb, int64_t vb) {
        return (__int128)fa * vb > (__int128)fb * va;
    }
    """
    void feerate_stable_sort(int64_t* idx, size_t n, const int64_t* fee,
                             const int64_t* vsize, const int64_t* recv,
                             const int64_t* tie) nogil
    int rate_gt(int64_t fa, int64_t va, int64_t fb, int64_t vb) nogil

BACKEND = "ext"


cdef int64_t[::1] _c64(arr):
    return np.ascontiguousarray(arr, dtype=np.int64)


def feerate_order(fee, vsize, recv, tie):
    cdef int64_t[::1] f = _c64(fee)
    cdef int64_t[::1] v = _c64(vsize)
    cdef int64_t[::1] r = _c64(recv)
    cdef int64_t[::1] k = _c64(tie)
    cdef Py_ssize_t n = f.shape[0]
    out = np.arange(n, dtype=np.int64)
    cdef int64_t[::1] idx = out
    if n > 1:
        with nogil:
            feerate_stable_sort(&idx[0], <size_t>n, &f[0], &v[0], &r[0], &k[0])
    return out


def greedy_fill(fee, vsize, recv, tie, parent, capacity):
    cdef int64_t[::1] v = _c64(vsize)
    cdef int64_t[::1] par = _c64(parent)
    order_arr = feerate_order(fee, vsize, recv, tie)
    cdef int64_t[::1] order = order_arr
    cdef Py_ssize_t n = v.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    suffix = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] suffix_min = suffix
    taken_arr = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] taken = taken_arr
    out_arr = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef int64_t residual = capacity
    cdef int64_t running, vi
    cdef Py_ssize_t pos, m = 0
    cdef int64_t i, p
    with nogil:
        running = v[order[n - 1]]
        for pos in range(n - 1, -1, -1):
            vi = v[order[pos]]
            if vi < running:
                running = vi
            suffix_min[pos] = running
        for pos in range(n):
            if residual < suffix_min[pos]:
                break
            i = order[pos]
            vi = v[i]
            if vi > residual:
                continue
            p = par[i]
            if p == -2 or (p >= 0 and taken[p] == 0):
                continue
            taken[i] = 1
            out[m] = i
            m += 1
            residual -= vi
    return out_arr[:m].copy()


def count_violations(t, fee, vsize, blk, eps):
    cdef int64_t[::1] tt = _c64(t)
    cdef int64_t[::1] f = _c64(fee)
    cdef int64_t[::1] v = _c64(vsize)
    cdef int64_t[::1] b = _c64(blk)
    cdef Py_ssize_t n = tt.shape[0]
    order_arr = np.argsort(np.asarray(t, dtype=np.int64), kind="stable").astype(np.int64)
    cdef int64_t[::1] order = order_arr
    cdef int64_t e = eps
    cdef Py_ssize_t jpos, ipos, limit = 0
    cdef int64_t i, j, checked = 0, violations = 0
    cdef int64_t tj, fj, vj, bj
    with nogil:
        for jpos in range(n):
            j = order[jpos]
            tj = tt[j] - e
            # order is time-sorted and tj non-decreasing: two-pointer advance
            while limit < n and tt[order[limit]] < tj:
                limit += 1
            fj = f[j]
            vj = v[j]
            bj = b[j]
            for ipos in range(limit):
                i = order[ipos]
                if rate_gt(f[i], v[i], fj, vj):
                    checked += 1
                    if b[i] > bj:
                        violations += 1
    return int(checked), int(violations)


def perc_errors(fee, vsize):
    cdef Py_ssize_t n = len(fee)
    out_arr = np.zeros(n, dtype=np.float64)
    if n <= 1:
        return out_arr
    zeros = np.zeros(n, dtype=np.int64)
    obs = np.arange(n, dtype=np.int64)
    order_arr = feerate_order(fee, vsize, zeros, obs)
    cdef int64_t[::1] order = order_arr
    cdef double[::1] err = out_arr
    cdef double scale = 100.0 / (n - 1)
    cdef Py_ssize_t pos
    with nogil:
        for pos in range(n):
            err[order[pos]] = (pos - <double>order[pos]) * scale
    return out_arr
