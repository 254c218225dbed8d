"""Numpy implementation of the monotone-chain argmax (fallback for the compiled kernel)."""

import numpy as np


def _prefix_argmax(values: np.ndarray):
    running = np.maximum.accumulate(values)
    fresh = np.empty(values.size, dtype=bool)
    fresh[0] = True
    fresh[1:] = values[1:] > running[:-1]
    where = np.maximum.accumulate(np.where(fresh, np.arange(values.size), 0))
    return running, where


def chain_argmax(base, lin, points, lam, allowed):
    """Maximize ``sum_k base[k, g_k] - lam * lin[k] * points[g_k]`` over ``g_0 <= ... <= g_{K-1}``.

    Where ``allowed[k]`` is false, ``g_k`` is pinned to ``g_{k-1}``. Ties go to
    lower grid indices. Returns the index tuple and the optimal value.
    """
    base = np.asarray(base, dtype=np.float64)
    K, G = base.shape
    if K == 0 or G == 0:
        raise ValueError("empty objective table")
    ptr = np.zeros((K, G), dtype=np.intp)
    acc = base[0] - (lam * lin[0]) * points
    for k in range(1, K):
        f = base[k] - (lam * lin[k]) * points
        if allowed[k]:
            running, ptr[k] = _prefix_argmax(acc)
            acc = f + running
        else:
            acc = f + acc
            ptr[k] = np.arange(G)
    g = int(np.argmax(acc))
    best = float(acc[g])
    idx = np.empty(K, dtype=np.intp)
    for k in range(K - 1, 0, -1):
        idx[k] = g
        g = ptr[k, g]
    idx[0] = g
    return idx, best
