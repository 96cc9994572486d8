"""Dense tensors with parity and the primitive equivariant operations.

A :class:`TensorValue` stores all ``d**k`` components of an order-``k`` tensor
in row-major order, so that index ``(i_1, ..., i_k)`` lives at offset
``sum(i_q * d**(k - q))``.  Indices are 0-based throughout the library.

Contraction convention: ``contract(a, k, metric)`` pairs index ``q`` with
index ``k + q`` for ``q < k`` and inserts the metric tensor between them with
its first index on ``q``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

__all__ = [
    "MetricSignature",
    "TensorValue",
    "add",
    "contract",
    "from_bytes",
    "group_act",
    "inner_product",
    "kronecker_delta",
    "levi_civita",
    "metric_tensor",
    "outer",
    "permute_indices",
    "scale",
    "to_bytes",
]

TENSOR_MAGIC = b"EQT1"


@dataclass(frozen=True)
class MetricSignature:
    """Bilinear form preserved by a group: Euclidean, Minkowski or symplectic.

    ``kind`` is one of ``"euclidean"``, ``"minkowski"``, ``"symplectic"``.
    For Minkowski, ``s`` is the number of ``+1`` entries on the diagonal of
    ``diag(I_s, -I_{d-s})``.
    """

    kind: str
    dim: int
    s: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")
        if self.kind == "euclidean":
            return
        if self.kind == "minkowski":
            if not 0 < self.s < self.dim:
                raise ValueError(f"Minkowski signature needs 0 < s < d, got s={self.s}, d={self.dim}")
        elif self.kind == "symplectic":
            if self.dim % 2:
                raise ValueError(f"symplectic form needs even d, got {self.dim}")
        else:
            raise ValueError(f"unknown metric kind {self.kind!r}")

    @classmethod
    def euclidean(cls, d: int) -> "MetricSignature":
        return cls("euclidean", d)

    @classmethod
    def minkowski(cls, s: int, d: int) -> "MetricSignature":
        return cls("minkowski", d, s)

    @classmethod
    def symplectic(cls, d: int) -> "MetricSignature":
        return cls("symplectic", d)

    @classmethod
    def parse(cls, text: str) -> "MetricSignature":
        """Parse ``euclidean:3``, ``minkowski:1,3`` (s, d-s) or ``symplectic:4``."""
        kind, _, rest = text.strip().lower().partition(":")
        try:
            if kind == "euclidean":
                return cls.euclidean(int(rest))
            if kind == "minkowski":
                s, t = (int(x) for x in rest.split(","))
                return cls.minkowski(s, s + t)
            if kind == "symplectic":
                return cls.symplectic(int(rest))
        except ValueError as exc:
            raise ValueError(f"cannot parse metric {text!r}: {exc}") from None
        raise ValueError(f"cannot parse metric {text!r}")

    def __str__(self) -> str:
        if self.kind == "minkowski":
            return f"minkowski:{self.s},{self.dim - self.s}"
        return f"{self.kind}:{self.dim}"

    @property
    def symmetric(self) -> bool:
        return self.kind != "symplectic"

    def matrix(self) -> np.ndarray:
        """The ``d x d`` Gram matrix of the form (identity, I_{s,d-s} or J_d)."""
        d = self.dim
        if self.kind == "euclidean":
            return np.eye(d)
        if self.kind == "minkowski":
            return np.diag([1.0] * self.s + [-1.0] * (d - self.s))
        h = d // 2
        J = np.zeros((d, d))
        J[:h, h:] = np.eye(h)
        J[h:, :h] = -np.eye(h)
        return J


class TensorValue:
    """Immutable dense order-``k`` tensor in ``d`` dimensions with a parity flag.

    Parity only matters to :func:`group_act`; every other operation treats it
    as metadata that is propagated.
    """

    __slots__ = ("_data", "parity", "_dim")

    def __init__(self, data, parity: int = 1, dim: int | None = None):
        arr = np.array(data, dtype=np.float64)
        if parity not in (1, -1):
            raise ValueError(f"parity must be +1 or -1, got {parity}")
        if arr.ndim == 0:
            if dim is None:
                raise ValueError("a scalar TensorValue needs an explicit dim")
            arr = arr.reshape(())
        else:
            d = arr.shape[0]
            if any(n != d for n in arr.shape):
                raise ValueError(f"all axes must have equal length, got shape {arr.shape}")
            if dim is not None and dim != d:
                raise ValueError(f"dim={dim} does not match data shape {arr.shape}")
            dim = d
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor components must be finite")
        arr.setflags(write=False)
        self._data = arr
        self.parity = int(parity)
        self._dim = int(dim)

    @classmethod
    def from_components(cls, components, dim: int, order: int, parity: int = 1) -> "TensorValue":
        comps = np.asarray(components, dtype=np.float64)
        if comps.size != dim**order:
            raise ValueError(f"expected {dim**order} components, got {comps.size}")
        return cls(comps.reshape((dim,) * order), parity, dim)

    @classmethod
    def zeros(cls, dim: int, order: int, parity: int = 1) -> "TensorValue":
        return cls(np.zeros((dim,) * order), parity, dim)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def order(self) -> int:
        return self._data.ndim

    @property
    def data(self) -> np.ndarray:
        """Read-only view with shape ``(d,) * k``."""
        return self._data

    @property
    def components(self) -> np.ndarray:
        """Flat row-major components, length ``d**k``."""
        return self._data.reshape(-1)

    def __repr__(self) -> str:
        return f"TensorValue(dim={self.dim}, order={self.order}, parity={self.parity:+d})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorValue):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.parity == other.parity
            and self._data.shape == other._data.shape
            and bool(np.array_equal(self._data, other._data))
        )

    __hash__ = None

    def allclose(self, other: "TensorValue", rtol: float = 1e-12, atol: float = 1e-12) -> bool:
        return self._data.shape == other._data.shape and bool(
            np.allclose(self._data, other._data, rtol=rtol, atol=atol)
        )

    def __add__(self, other: "TensorValue") -> "TensorValue":
        return add(self, other)

    def __sub__(self, other: "TensorValue") -> "TensorValue":
        return add(self, scale(-1.0, other))

    def __mul__(self, c: float) -> "TensorValue":
        return scale(c, self)

    __rmul__ = __mul__

    def __neg__(self) -> "TensorValue":
        return scale(-1.0, self)


def _check_same_dim(a: TensorValue, b: TensorValue) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")


def outer(a: TensorValue, b: TensorValue) -> TensorValue:
    """Outer product; orders add and parities multiply."""
    _check_same_dim(a, b)
    return TensorValue(np.multiply.outer(a.data, b.data), a.parity * b.parity, a.dim)


def add(a: TensorValue, b: TensorValue) -> TensorValue:
    _check_same_dim(a, b)
    if a.order != b.order:
        raise ValueError(f"order mismatch: {a.order} vs {b.order}")
    if a.parity != b.parity:
        raise ValueError("cannot add tensors of different parity")
    return TensorValue(a.data + b.data, a.parity, a.dim)


def scale(c: float, a: TensorValue) -> TensorValue:
    return TensorValue(float(c) * a.data, a.parity, a.dim)


def _metric_for(metric: MetricSignature | None, d: int) -> np.ndarray:
    if metric is None:
        return np.eye(d)
    if metric.dim != d:
        raise ValueError(f"metric dimension {metric.dim} does not match tensor dimension {d}")
    return metric.matrix()


def contract(a: TensorValue, k: int, metric: MetricSignature | None = None) -> TensorValue:
    """k-contraction: sum index ``q`` against index ``k + q`` through the metric.

    ``metric=None`` is the Euclidean case.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if a.order < 2 * k:
        raise ValueError(f"cannot {k}-contract a tensor of order {a.order}")
    if k == 0:
        return a
    theta = _metric_for(metric, a.dim)
    out = a.data
    # after each step the next pair sits at axes (0, j - 1)
    for j in range(k, 0, -1):
        out = np.tensordot(theta, out, axes=([0, 1], [0, j]))
    return TensorValue(out, a.parity, a.dim)


def permute_indices(a: TensorValue, sigma: Sequence[int]) -> TensorValue:
    """Index permutation ``[a^sigma]_{i_1..i_k} = [a]_{i_sigma^-1(1) .. i_sigma^-1(k)}``.

    ``sigma`` is 0-based one-line notation.
    """
    sigma = tuple(int(s) for s in sigma)
    if len(sigma) != a.order or sorted(sigma) != list(range(a.order)):
        raise ValueError(f"{sigma} is not a permutation of {a.order} indices")
    return TensorValue(np.transpose(a.data, sigma), a.parity, a.dim)


def apply_matrix(M: np.ndarray, arr: np.ndarray) -> np.ndarray:
    """Apply ``M`` on every index of ``arr`` (shape ``(d,)*k``)."""
    out = arr
    for _ in range(arr.ndim):
        # contracting the leading axis and appending the new one cycles through all axes
        out = np.tensordot(out, M, axes=([0], [1]))
    return out


def group_act(g, a: TensorValue) -> TensorValue:
    """Diagonal action of a group element, twisted by ``det(M)**((1-p)/2)``.

    ``g`` is a :class:`~eqtensor.groups.GroupElement` or a bare matrix.
    """
    M = np.asarray(getattr(g, "matrix", g), dtype=np.float64)
    if M.shape != (a.dim, a.dim):
        raise ValueError(f"group element of shape {M.shape} cannot act on dim {a.dim}")
    out = apply_matrix(M, a.data)
    if a.parity == -1:
        det_sign = getattr(g, "det_sign", None)
        if det_sign is None:
            det_sign = 1 if np.linalg.det(M) > 0 else -1
        out = det_sign * out
    return TensorValue(out, a.parity, a.dim)


def kronecker_delta(d: int) -> TensorValue:
    if d < 1:
        raise ValueError("d must be positive")
    return TensorValue(np.eye(d), 1, d)


def _perm_sign(p: Sequence[int]) -> int:
    sign = 1
    p = list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def levi_civita(d: int) -> TensorValue:
    """Order-d alternating symbol with parity -1."""
    if d < 2:
        raise ValueError("the Levi-Civita symbol needs d >= 2")
    eps = np.zeros((d,) * d)
    for p in permutations(range(d)):
        eps[p] = _perm_sign(p)
    return TensorValue(eps, -1, d)


def metric_tensor(metric: MetricSignature) -> TensorValue:
    """The invariant order-2 tensor of the metric's group."""
    return TensorValue(metric.matrix(), 1, metric.dim)


def inner_product(u: TensorValue, v: TensorValue, metric: MetricSignature | None = None) -> float:
    if u.order != 1 or v.order != 1:
        raise ValueError("inner_product takes two vectors")
    _check_same_dim(u, v)
    theta = _metric_for(metric, u.dim)
    return float(u.data @ theta @ v.data)


def to_bytes(a: TensorValue) -> bytes:
    """Binary record: ``EQT1``, u32 dim, u32 order, i8 parity, float64 LE components."""
    header = TENSOR_MAGIC + struct.pack("<IIb", a.dim, a.order, a.parity)
    return header + a.components.astype("<f8").tobytes()


def from_bytes(buf: bytes) -> TensorValue:
    if buf[:4] != TENSOR_MAGIC:
        raise ValueError("not an EQT1 tensor record")
    dim, order, parity = struct.unpack_from("<IIb", buf, 4)
    n = dim**order
    start = 4 + struct.calcsize("<IIb")
    if len(buf) != start + 8 * n:
        raise ValueError(f"tensor record length {len(buf)} does not match header (d={dim}, k={order})")
    comps = np.frombuffer(buf, dtype="<f8", count=n, offset=start)
    return TensorValue.from_components(comps, dim, order, parity)

