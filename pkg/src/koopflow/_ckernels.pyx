# cython: language_level=3
"""Compiled inner loops. Signatures mirror ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def dtw_accumulate(const double[:, ::1] dist):
    """Cumulative DTW cost matrix for a pairwise distance matrix."""
    cdef Py_ssize_t n = dist.shape[0], k = dist.shape[1]
    cdef Py_ssize_t i, j
    cdef double best, up, left, diag
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] w = out
    if n == 0 or k == 0:
        return out
    w[0, 0] = dist[0, 0]
    for j in range(1, k):
        w[0, j] = dist[0, j] + w[0, j - 1]
    for i in range(1, n):
        w[i, 0] = dist[i, 0] + w[i - 1, 0]
        for j in range(1, k):
            up = w[i - 1, j]
            left = w[i, j - 1]
            diag = w[i - 1, j - 1]
            best = diag
            if up < best:
                best = up
            if left < best:
                best = left
            w[i, j] = dist[i, j] + best
    return out


def antidiagonal_mean(const double[:, ::1] data, Py_ssize_t t, Py_ssize_t h):
    """Average Hankel cells that map to the same (detector, time) entry.

    Deviations from the first cell of each anti-diagonal are averaged, so a
    consistent Hankel matrix is inverted exactly.
    """
    cdef Py_ssize_t m = data.shape[1]
    cdef Py_ssize_t n_time = m + h - 1
    cdef Py_ssize_t i, d, j, row, tau
    cdef double c
    out = np.zeros((t, n_time), dtype=np.float64)
    ref = np.empty((t, n_time), dtype=np.float64)
    counts = np.zeros(n_time, dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[:, ::1] r = ref
    cdef double[::1] cnt = counts
    # first cell: block 0 for tau < m, else the last column of block tau-m+1
    for d in range(t):
        for tau in range(n_time):
            if tau < m:
                r[d, tau] = data[d, tau]
            else:
                r[d, tau] = data[(tau - m + 1) * t + d, m - 1]
    for i in range(h):
        for d in range(t):
            row = i * t + d
            for j in range(m):
                o[d, i + j] += data[row, j] - r[d, i + j]
    for tau in range(n_time):
        c = h
        if tau + 1 < c:
            c = tau + 1
        if n_time - tau < c:
            c = n_time - tau
        if m < c:
            c = m
        cnt[tau] = c
    for d in range(t):
        for tau in range(n_time):
            o[d, tau] = r[d, tau] + o[d, tau] / cnt[tau]
    return out
