# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a numpy twin in ``_kernels_py`` with the same
signature and bit-identical output; ``kernels`` picks one at import.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


def insertion_sample(const int[::1] central, const double[:, ::1] cdf,
                     const double[:, ::1] uniforms):
    """Sequential Mallows sampler driven by pre-drawn uniforms.

    ``cdf[m, j]`` is the cumulative probability of picking remaining-rank
    ``j`` (0-based) when ``m`` elements remain; only ``j < m - 1`` is read.
    """
    cdef Py_ssize_t n = central.shape[0]
    cdef Py_ssize_t count = uniforms.shape[0]
    out_arr = np.empty((count, n), dtype=np.int32)
    cdef int[:, ::1] out = out_arr
    cdef int *rem = <int *> malloc(n * sizeof(int))
    cdef Py_ssize_t s, t, k, j, m
    cdef double u
    try:
        for s in range(count):
            for k in range(n):
                rem[k] = central[k]
            for t in range(n):
                m = n - t
                u = uniforms[s, t]
                j = 0
                for k in range(m - 1):
                    if cdf[m, k] <= u:
                        j += 1
                    else:
                        break
                out[s, t] = rem[j]
                for k in range(j, m - 1):
                    rem[k] = rem[k + 1]
    finally:
        free(rem)
    return out_arr


def prepend_insert(const int[:, ::1] orders, const int[::1] fresh,
                   const double[:, ::1] cdf, const double[:, ::1] uniforms):
    """Insert ``fresh[0]``, ``fresh[1]``, ... one at a time.

    When ``m`` slots-to-be exist (current length ``m - 1``) the new element
    lands at 0-based slot ``j`` with cumulative law ``cdf[m]``.
    """
    cdef Py_ssize_t count = orders.shape[0]
    cdef Py_ssize_t n = orders.shape[1]
    cdef Py_ssize_t k = fresh.shape[0]
    out_arr = np.empty((count, n + k), dtype=np.int32)
    cdef int[:, ::1] out = out_arr
    cdef Py_ssize_t s, r, q, j, m, cur
    cdef double u
    for s in range(count):
        for q in range(n):
            out[s, q] = orders[s, q]
        cur = n
        for r in range(k):
            m = cur + 1
            u = uniforms[s, r]
            j = 0
            for q in range(m - 1):
                if cdf[m, q] <= u:
                    j += 1
                else:
                    break
            q = cur
            while q > j:
                out[s, q] = out[s, q - 1]
                q -= 1
            out[s, j] = fresh[r]
            cur += 1
    return out_arr


def top_counts(const int[:, ::1] orders, const double[::1] weights, Py_ssize_t n):
    """Weighted tallies of top-1 element, top-2 set and top-3 set.

    Returns ``p1`` (n,), ``p2`` (n, n) symmetric and the top-3 sets as a flat
    key array ``i*n*n + j*n + k`` (i < j < k) with matching weights, sorted
    by key.
    """
    cdef Py_ssize_t count = orders.shape[0]
    p1_arr = np.zeros(n, dtype=np.float64)
    p2_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[::1] p1 = p1_arr
    cdef double[:, ::1] p2 = p2_arr
    keys_arr = np.empty(count, dtype=np.int64)
    cdef long long[::1] keys = keys_arr
    cdef Py_ssize_t s
    cdef long long a, b, c, t
    cdef double w
    for s in range(count):
        w = weights[s]
        a = orders[s, 0]
        b = orders[s, 1]
        c = orders[s, 2]
        p1[a] += w
        p2[a, b] += w
        p2[b, a] += w
        if a > b:
            t = a; a = b; b = t
        if b > c:
            t = b; b = c; c = t
        if a > b:
            t = a; a = b; b = t
        keys[s] = (a * n + b) * n + c
    order = np.argsort(keys_arr, kind="stable")
    sorted_keys = keys_arr[order]
    sorted_w = np.asarray(weights)[order]
    uniq, start = np.unique(sorted_keys, return_index=True)
    vals = np.add.reduceat(sorted_w, start) if len(start) else np.zeros(0)
    return p1_arr, p2_arr, uniq, vals


def position_counts(const int[:, ::1] orders, const double[::1] weights, Py_ssize_t n):
    """``F[e, p]`` = total weight of rows ranking element ``e`` at position ``p``."""
    cdef Py_ssize_t count = orders.shape[0]
    cdef Py_ssize_t m = orders.shape[1]
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t s, p
    cdef double w
    for s in range(count):
        w = weights[s]
        for p in range(m):
            out[orders[s, p], p] += w
    return out_arr


def distances_to(const int[:, ::1] orders, const int[::1] central_pos):
    """Kendall distance of every row to the ranking with inverse ``central_pos``."""
    cdef Py_ssize_t count = orders.shape[0]
    cdef Py_ssize_t n = orders.shape[1]
    out_arr = np.empty(count, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef int *r = <int *> malloc(n * sizeof(int))
    cdef Py_ssize_t s, p, q
    cdef long long d
    try:
        for s in range(count):
            for p in range(n):
                r[p] = central_pos[orders[s, p]]
            d = 0
            for p in range(n):
                for q in range(p + 1, n):
                    if r[p] > r[q]:
                        d += 1
            out[s] = d
    finally:
        free(r)
    return out_arr


def precedence(const int[:, ::1] orders, const double[::1] weights, Py_ssize_t n):
    """``C[a, b]`` = total weight of rows placing ``a`` before ``b``."""
    cdef Py_ssize_t count = orders.shape[0]
    cdef Py_ssize_t m = orders.shape[1]
    out_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t s, p, q
    cdef int a
    cdef double w
    for s in range(count):
        w = weights[s]
        for p in range(m):
            a = orders[s, p]
            for q in range(p + 1, m):
                out[a, orders[s, q]] += w
    return out_arr


def lehmer_keys(const int[:, ::1] orders, const long long[::1] radix):
    """Lexicographic rank of each row (``radix[p] = (n - 1 - p)!``)."""
    cdef Py_ssize_t count = orders.shape[0]
    cdef Py_ssize_t n = orders.shape[1]
    out_arr = np.empty(count, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef Py_ssize_t s, p, q
    cdef long long key, c
    for s in range(count):
        key = 0
        for p in range(n):
            c = 0
            for q in range(p + 1, n):
                if orders[s, q] < orders[s, p]:
                    c += 1
            key += c * radix[p]
        out[s] = key
    return out_arr
