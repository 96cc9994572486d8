"""Truncated path signatures: exact piecewise-linear oracle, Chen product, discrete baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .. import _kernels
from ..tensor_core import TensorValue

__all__ = [
    "PathSample",
    "batch_discrete_signature",
    "batch_signature",
    "chen_product",
    "discrete_signature_baseline",
    "gen_poly_path",
    "poly_points",
    "signature_oracle",
]

TRUTH_SEGMENTS = 1000


def _points_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        X = np.asarray(points, dtype=np.float64)
    else:
        if any(p.order != 1 for p in points):
            raise ValueError("path points must be order-1 tensors")
        X = np.stack([p.data for p in points])
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("a path needs at least 2 points")
    return X


def _as_tensors(flat: np.ndarray, d: int, depth: int) -> list[TensorValue]:
    return [TensorValue(a[0], 1, d) for a in _kernels.split_levels(flat, d, depth)]


def signature_oracle(points, M: int) -> list[TensorValue]:
    """Levels 1..M of the signature of the piecewise-linear path through ``points``."""
    X = _points_array(points)
    if M < 1:
        raise ValueError("M must be at least 1")
    flat = _kernels.signature_levels(np.diff(X, axis=0)[None], M, exact=True)
    return _as_tensors(flat, X.shape[1], M)


def discrete_signature_baseline(points, M: int) -> list[TensorValue]:
    """Ordered sums of increment products over strictly increasing index tuples."""
    X = _points_array(points)
    if M < 1:
        raise ValueError("M must be at least 1")
    flat = _kernels.signature_levels(np.diff(X, axis=0)[None], M, exact=False)
    return _as_tensors(flat, X.shape[1], M)


def batch_signature(X: np.ndarray, M: int, exact: bool = True) -> list[np.ndarray]:
    """``(B, m, d)`` point sequences to a list of ``(B,) + (d,)*k`` levels."""
    flat = _kernels.signature_levels(np.diff(X, axis=1), M, exact=exact)
    return _kernels.split_levels(flat, X.shape[2], M)


def batch_discrete_signature(X: np.ndarray, M: int) -> list[np.ndarray]:
    return batch_signature(X, M, exact=False)


def chen_product(a: Sequence[TensorValue], b: Sequence[TensorValue]) -> list[TensorValue]:
    """Truncated tensor-algebra product of ``(1, a_1..a_M)`` and ``(1, b_1..b_M)``."""
    if len(a) != len(b):
        raise ValueError("both signatures must be truncated at the same level")
    out = []
    for k in range(1, len(a) + 1):
        acc = a[k - 1].data + b[k - 1].data
        for j in range(1, k):
            acc = acc + np.multiply.outer(a[j - 1].data, b[k - j - 1].data)
        out.append(TensorValue(acc, 1, a[0].dim))
    return out


@dataclass(frozen=True)
class PathSample:
    coefficients: np.ndarray  # (d, degree + 1), lowest power first
    points: np.ndarray  # (n, d)
    signature: tuple[np.ndarray, ...]  # levels 1..M

    @property
    def point_tensors(self) -> list[TensorValue]:
        return [TensorValue(p) for p in self.points]


def poly_points(coefficients: np.ndarray, n: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """``n`` evenly spaced samples of the polynomial path, shape ``(n, d)``."""
    t = np.linspace(lo, hi, n)
    return P.polyval(t, np.asarray(coefficients).T).T


def gen_poly_path(
    rng: np.random.Generator,
    d: int = 3,
    degree: int = 5,
    n: int = 10,
    M: int = 3,
    truth_segments: int = TRUTH_SEGMENTS,
) -> PathSample:
    """Random polynomial path on ``[-1, 1]`` with coefficients uniform in ``[-1, 1]``."""
    if degree < 1:
        raise ValueError("degree must be at least 1")
    coeffs = rng.uniform(-1.0, 1.0, size=(d, degree + 1))
    pts = poly_points(coeffs, n)
    fine = poly_points(coeffs, truth_segments + 1)
    sig = tuple(lv[0] for lv in batch_signature(fine[None], M))
    return PathSample(coeffs, pts, sig)
