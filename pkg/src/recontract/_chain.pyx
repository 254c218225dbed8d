# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled monotone-chain argmax. Must stay bit-identical to ``_chain_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def chain_argmax(const double[:, ::1] base, const double[::1] lin,
                 const double[::1] points, double lam, const unsigned char[::1] allowed):
    cdef Py_ssize_t K = base.shape[0], G = base.shape[1]
    cdef Py_ssize_t k, g, runarg, best_g
    cdef double c, v, runmax, best
    if K == 0 or G == 0:
        raise ValueError("empty objective table")
    ptr_arr = np.zeros((K, G), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] ptr = ptr_arr
    prev_arr = np.empty(G, dtype=np.float64)
    cur_arr = np.empty(G, dtype=np.float64)
    cdef double[::1] prev = prev_arr
    cdef double[::1] cur = cur_arr
    cdef double[::1] tmp

    c = lam * lin[0]
    for g in range(G):
        prev[g] = base[0, g] - c * points[g]

    for k in range(1, K):
        c = lam * lin[k]
        if allowed[k]:
            runmax = -INFINITY
            runarg = 0
            for g in range(G):
                v = prev[g]
                if g == 0 or v > runmax:
                    runmax = v
                    runarg = g
                cur[g] = (base[k, g] - c * points[g]) + runmax
                ptr[k, g] = runarg
        else:
            for g in range(G):
                cur[g] = (base[k, g] - c * points[g]) + prev[g]
                ptr[k, g] = g
        tmp = prev
        prev = cur
        cur = tmp

    best = prev[0]
    best_g = 0
    for g in range(1, G):
        if prev[g] > best:
            best = prev[g]
            best_g = g

    idx = np.empty(K, dtype=np.intp)
    g = best_g
    for k in range(K - 1, 0, -1):
        idx[k] = g
        g = ptr[k, g]
    idx[0] = g
    return idx, best
