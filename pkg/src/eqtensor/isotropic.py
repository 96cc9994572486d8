"""Enumeration of isotropic tensor bases.

Permutations are 0-based one-line tuples acting through
:func:`~eqtensor.tensor_core.permute_indices`.  A basis element is the
permuted product ``(theta^{(k/2)})^sigma`` (or ``(delta^{(k-d)/2} (x) eps)^sigma``
for pseudotensors), and the reduced sets below pick exactly one ``sigma`` per
distinct product.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import factorial
from typing import Iterator, Sequence

import numpy as np

from .tensor_core import (
    MetricSignature,
    TensorValue,
    kronecker_delta,
    levi_civita,
    metric_tensor,
    outer,
    permute_indices,
)

__all__ = [
    "IsotropicBasis",
    "count_Gk",
    "count_Hk",
    "enumerate_Gk",
    "enumerate_Hk",
    "group_closure",
    "independent_subset",
    "isotropic_basis",
    "perfect_matchings",
]

RANK_RTOL = 1e-9


def perfect_matchings(items: Sequence[int]) -> Iterator[list[tuple[int, int]]]:
    """Perfect matchings of ``items``, pairing the smallest unpaired item first."""
    items = list(items)
    if not items:
        yield []
        return
    first = items[0]
    for j in range(1, len(items)):
        rest = items[1:j] + items[j + 1 :]
        for m in perfect_matchings(rest):
            yield [(first, items[j])] + m


def _inverse(p: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(p)
    for i, v in enumerate(p):
        inv[v] = i
    return tuple(inv)


def enumerate_Gk(k: int) -> list[tuple[int, ...]]:
    """Reduced permutation set indexing the distinct ``(delta^{k/2})^sigma``.

    Each matching of the ``k`` output slots gives one permutation: the matched
    pairs listed in order form ``sigma^-1``.  Returned in lexicographic order;
    ``len == k! / ((k/2)! 2^(k/2))``.
    """
    if k < 0 or k % 2:
        raise ValueError(f"G_k is only defined for even k >= 0, got {k}")
    perms = []
    for m in perfect_matchings(range(k)):
        tau = tuple(x for pair in m for x in pair)
        perms.append(_inverse(tau))
    return sorted(perms)


def enumerate_Hk(k: int, d: int) -> list[tuple[int, ...]]:
    """Reduced set for ``(delta^{(k-d)/2} (x) eps)^sigma``; empty when it vanishes."""
    if k < d or (k - d) % 2:
        return []
    perms = []
    for eps_slots in combinations(range(k), d):
        rest = [i for i in range(k) if i not in eps_slots]
        for m in perfect_matchings(rest):
            tau = tuple(x for pair in m for x in pair) + eps_slots
            perms.append(_inverse(tau))
    return sorted(perms)


def count_Gk(k: int) -> int:
    return factorial(k) // (factorial(k // 2) * 2 ** (k // 2))


def count_Hk(k: int, d: int) -> int:
    if k < d or (k - d) % 2:
        return 0
    h = (k - d) // 2
    return factorial(k) // (factorial(h) * 2**h * factorial(d))


@dataclass(frozen=True)
class IsotropicBasis:
    order: int
    parity: int
    metric: MetricSignature
    elements: tuple[tuple[tuple[int, ...], TensorValue], ...]

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def permutations(self) -> list[tuple[int, ...]]:
        return [p for p, _ in self.elements]

    @property
    def tensors(self) -> list[TensorValue]:
        return [t for _, t in self.elements]

    def matrix(self) -> np.ndarray:
        """Elements stacked as rows of a ``(len, d**k)`` matrix."""
        if not self.elements:
            return np.zeros((0, self.metric.dim**self.order))
        return np.stack([t.components for t in self.tensors])


def _power(t: TensorValue, n: int, d: int) -> TensorValue:
    out = TensorValue(1.0, 1, d)
    for _ in range(n):
        out = outer(out, t)
    return out


def isotropic_basis(k: int, parity: int, metric: MetricSignature) -> IsotropicBasis:
    """Spanning set of tensors of order ``k`` fixed by the metric's group.

    Parity -1 (pseudotensors) is only supported for the Euclidean metric.
    """
    d = metric.dim
    if parity == -1 and metric.kind != "euclidean":
        raise ValueError("pseudotensor bases are only available for the Euclidean metric")
    if parity not in (1, -1):
        raise ValueError("parity must be +1 or -1")
    elements = []
    if parity == 1:
        if k % 2 == 0:
            theta = kronecker_delta(d) if metric.kind == "euclidean" else metric_tensor(metric)
            base = _power(theta, k // 2, d)
            elements = [(s, permute_indices(base, s)) for s in enumerate_Gk(k)]
    elif d >= 2:
        perms = enumerate_Hk(k, d)
        if perms:
            base = outer(_power(kronecker_delta(d), (k - d) // 2, d), levi_civita(d))
            elements = [(s, permute_indices(base, s)) for s in perms]
    return IsotropicBasis(k, parity, metric, tuple(elements))


def group_closure(generators: Sequence[Sequence[int]], k: int) -> list[tuple[int, ...]]:
    """All products of the given slot permutations, identity included."""
    identity = tuple(range(k))
    seen = {identity}
    frontier = [identity]
    gens = [tuple(g) for g in generators]
    while frontier:
        nxt = []
        for p in frontier:
            for g in gens:
                q = tuple(p[g[i]] for i in range(k))
                if q not in seen:
                    seen.add(q)
                    nxt.append(q)
        frontier = nxt
    return sorted(seen)


def _symmetrize(t: np.ndarray, group: Sequence[tuple[int, ...]]) -> np.ndarray:
    return sum(np.transpose(t, g) for g in group) / len(group)


def independent_subset(
    basis: IsotropicBasis, symmetrize_under: Sequence[Sequence[int]] | None = None
) -> IsotropicBasis:
    """Maximal linearly independent subset after symmetrizing under input slots.

    ``symmetrize_under`` lists generators of a group of permutations of the
    tensor's slots that leave the contracted input unchanged, e.g. ``[(1, 0, 2, 3)]``
    for a symmetric ``a (x) a`` against the first two slots.  Elements are kept
    greedily in their original order; kept elements are returned unchanged.
    """
    if not basis.elements:
        return basis
    if not symmetrize_under:
        vecs = basis.matrix()
    else:
        group = group_closure(symmetrize_under, basis.order)
        vecs = np.stack([_symmetrize(t.data, group).reshape(-1) for t in basis.tensors])
    keep: list[int] = []
    smax = float(np.linalg.norm(vecs, 2)) or 1.0
    for i in range(len(vecs)):
        trial = vecs[keep + [i]]
        sv = np.linalg.svd(trial, compute_uv=False)
        if int(np.sum(sv > RANK_RTOL * smax)) == len(keep) + 1:
            keep.append(i)
    elements = tuple(basis.elements[i] for i in keep)
    return IsotropicBasis(basis.order, basis.parity, basis.metric, elements)

