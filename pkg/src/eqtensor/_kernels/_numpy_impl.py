"""Vectorized numpy version of the signature kernels, used when the extension is missing."""

from __future__ import annotations

import numpy as np


def batch_levels(increments: np.ndarray, depth: int, exact: bool) -> np.ndarray:
    inc = np.ascontiguousarray(increments, dtype=np.float64)
    B, m, d = inc.shape
    levels = [np.zeros((B,) + (d,) * k) for k in range(1, depth + 1)]
    for i in range(m):
        delta = inc[:, i, :]
        if exact:
            powers = [delta]
            for j in range(2, depth + 1):
                powers.append(np.einsum("b...,bj->b...j", powers[-1], delta) / j)
            for k in range(depth, 0, -1):
                acc = powers[k - 1].copy()
                for j in range(1, k):
                    acc += _outer(levels[k - j - 1], powers[j - 1])
                levels[k - 1] += acc
        else:
            for k in range(depth, 1, -1):
                levels[k - 1] += _outer(levels[k - 2], delta)
            levels[0] += delta
    if not levels:
        return np.zeros((B, 0))
    return np.concatenate([lv.reshape(B, -1) for lv in levels], axis=1)


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    B = a.shape[0]
    return (a.reshape(B, -1, 1) * b.reshape(B, 1, -1)).reshape((B,) + a.shape[1:] + b.shape[1:])
