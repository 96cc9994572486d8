"""Equivariant model families built from isotropic tensors.

* :class:`VecToTensorModel` maps ``n`` vectors to one or more tensors as a sum
  of permuted products of input vectors and metric tensors, weighted by
  coefficients that a shared network computes from the Gram matrix.
* :class:`EigenEquivariantModel` maps a symmetric matrix to a symmetric matrix
  by acting on its eigenvalues.
* :func:`enumerate_general_basis` lists the polynomial equivariant maps
  between arbitrary tensor inputs and a tensor output up to a given degree.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from itertools import combinations_with_replacement, permutations
from typing import Callable, Sequence

import numpy as np

from .isotropic import _inverse, independent_subset, isotropic_basis
from .tensor_core import (
    MetricSignature,
    TensorValue,
    group_act,
    metric_tensor,
    outer,
    permute_indices,
)

__all__ = [
    "BasisTerm",
    "EigenEquivariantModel",
    "GeneralBasisMap",
    "VecToTensorModel",
    "apply_general_basis",
    "enumerate_basis_terms",
    "enumerate_general_basis",
    "evaluate_term",
    "invariant_features",
    "MAX_ISOTROPIC_ORDER",
]

MAX_ISOTROPIC_ORDER = 8
_LETTERS = string.ascii_lowercase.replace("b", "").replace("t", "")


@dataclass(frozen=True)
class BasisTerm:
    """``(v_J[0] (x) ... (x) v_J[m-1] (x) theta^t)^sigma`` with ``m = len(sigma) - 2t``."""

    t: int
    sigma: tuple[int, ...]
    J: tuple[int, ...]

    @property
    def order(self) -> int:
        return len(self.sigma)

    def layout(self) -> tuple:
        """What sits on each output axis: ``('v', j)`` or ``('p', partner_axis)``."""
        m = len(self.J)
        axis_of = _inverse(self.sigma)
        content: list = [None] * self.order
        for q, j in enumerate(self.J):
            content[axis_of[q]] = ("v", j)
        for i in range(self.t):
            a, b = axis_of[m + 2 * i], axis_of[m + 2 * i + 1]
            content[a] = ("p", b)
            content[b] = ("p", a)
        return tuple(content)

    def pattern(self) -> tuple[tuple[int, ...], tuple[tuple[int, int], ...]]:
        """Output axes of the vector slots and the oriented metric pairs."""
        m = len(self.J)
        axis_of = _inverse(self.sigma)
        vec_axes = tuple(axis_of[q] for q in range(m))
        pairs = tuple((axis_of[m + 2 * i], axis_of[m + 2 * i + 1]) for i in range(self.t))
        return vec_axes, pairs


def enumerate_basis_terms(n: int, k_prime: int, metric: MetricSignature | None = None) -> list[BasisTerm]:
    """Distinct permuted products of ``n`` vectors and metric tensors of order ``k_prime``.

    Ordered by ``t``, then ``sigma``, then ``J``; a term is dropped when an
    earlier one already produces the same tensor for every input (same vector
    index on each axis and the same axis pairs).  For symmetric metrics the
    orientation of a pair does not matter; for the symplectic form swapping a
    pair only flips the sign, so it is dropped as well.
    """
    if n < 1 or k_prime < 0:
        raise ValueError("need n >= 1 and k_prime >= 0")
    terms: list[BasisTerm] = []
    seen: set = set()
    perms = list(permutations(range(k_prime)))
    for t in range(k_prime // 2 + 1):
        m = k_prime - 2 * t
        for sigma in perms:
            for J in combinations_with_replacement(range(n), m):
                term = BasisTerm(t, sigma, tuple(J))
                key = term.layout()
                if key in seen:
                    continue
                seen.add(key)
                terms.append(term)
    return terms


def _theta(metric: MetricSignature | None, d: int) -> np.ndarray:
    if metric is None:
        return np.eye(d)
    return metric.matrix()


def evaluate_term(term: BasisTerm, vectors: Sequence[TensorValue], metric: MetricSignature | None = None) -> TensorValue:
    """Reference evaluation through outer products and an index permutation."""
    d = vectors[0].dim
    out = TensorValue(1.0, 1, d)
    for j in term.J:
        out = outer(out, vectors[j])
    theta = metric_tensor(metric) if metric is not None else TensorValue(np.eye(d), 1, d)
    for _ in range(term.t):
        out = outer(out, theta)
    return permute_indices(out, term.sigma)


def invariant_features(vectors, metric: MetricSignature | None = None) -> np.ndarray:
    """Gram matrix ``<v_i, v_j>`` under the metric.

    Accepts a list of order-1 :class:`TensorValue` or an ``(..., n, d)`` array.
    """
    if isinstance(vectors, np.ndarray):
        V = vectors
    else:
        dims = {v.dim for v in vectors}
        if len(dims) != 1:
            raise ValueError(f"vectors have mismatched dimensions {sorted(dims)}")
        if any(v.order != 1 for v in vectors):
            raise ValueError("invariant_features takes order-1 tensors")
        V = np.stack([v.data for v in vectors])
    theta = _theta(metric, V.shape[-1])
    if theta.shape[0] != V.shape[-1]:
        raise ValueError(f"metric dimension {theta.shape[0]} does not match vectors of dim {V.shape[-1]}")
    return np.einsum("...id,de,...je->...ij", V, theta, V)


class TermEvaluator:
    """Batched evaluation of a fixed list of basis terms.

    Terms sharing a pattern (same vector axes and metric pairs) are evaluated
    with one einsum over a gathered ``(B, T, d)`` stack per vector slot.
    """

    def __init__(self, terms: Sequence[BasisTerm], d: int, metric: MetricSignature | None = None):
        self.terms = list(terms)
        self.d = d
        self.theta = _theta(metric, d)
        self.order = self.terms[0].order if self.terms else 0
        if any(t.order != self.order for t in self.terms):
            raise ValueError("all terms must share one output order")
        groups: dict = {}
        for idx, term in enumerate(self.terms):
            groups.setdefault(term.pattern(), []).append(idx)
        self.groups = []
        k = self.order
        out_sub = "".join(_LETTERS[i] for i in range(k))
        for (vec_axes, pairs), idxs in groups.items():
            subs = ["bt" + _LETTERS[a] for a in vec_axes]
            subs += [_LETTERS[a] + _LETTERS[b] for a, b in pairs]
            J = np.array([self.terms[i].J for i in idxs], dtype=np.intp).reshape(len(idxs), len(vec_axes))
            self.groups.append((np.array(idxs), J, vec_axes, pairs, ",".join(subs), out_sub))

    def __len__(self) -> int:
        return len(self.terms)

    def evaluate(self, V: np.ndarray) -> np.ndarray:
        """``(B, n, d)`` vectors to a ``(B, T, d**k)`` stack of term values."""
        B = V.shape[0]
        k = self.order
        out = np.empty((B, len(self.terms), self.d**k))
        for idxs, J, vec_axes, pairs, subs, out_sub in self.groups:
            ops = [V[:, J[:, q], :] for q in range(len(vec_axes))]
            ops += [self.theta] * len(pairs)
            if vec_axes:
                val = np.einsum(subs + "->bt" + out_sub, *ops)
            else:
                base = np.einsum(subs + "->" + out_sub, *ops) if pairs else np.array(1.0)
                val = np.broadcast_to(base, (B, len(idxs)) + base.shape)
            out[:, idxs, :] = val.reshape(B, len(idxs), -1)
        return out


class VecToTensorModel:
    """``n`` vectors to tensors of the given output orders.

    ``coeff_net`` maps flattened Gram features (upper triangle, or the full
    matrix for the symplectic form, divided by ``d``) to one coefficient per
    term, concatenated across output orders in the order of ``orders``.
    """

    def __init__(
        self,
        n: int,
        orders: int | Sequence[int],
        metric: MetricSignature,
        coeff_net,
        terms: dict[int, list[BasisTerm]] | None = None,
    ):
        self.n = n
        self.orders = (orders,) if isinstance(orders, int) else tuple(orders)
        self.metric = metric
        self.d = metric.dim
        if terms is None:
            terms = {k: enumerate_basis_terms(n, k, metric) for k in self.orders}
        self.terms = {k: list(terms[k]) for k in self.orders}
        self.evaluators = {k: TermEvaluator(self.terms[k], self.d, metric) for k in self.orders}
        self.coeff_net = coeff_net
        self._triu = np.triu_indices(n)

    @property
    def n_terms(self) -> int:
        return sum(len(v) for v in self.terms.values())

    @property
    def n_features(self) -> int:
        return self.n * self.n if not self.metric.symmetric else self.n * (self.n + 1) // 2

    @property
    def params(self) -> list[np.ndarray]:
        return self.coeff_net.params

    def features(self, V: np.ndarray) -> np.ndarray:
        G = invariant_features(V, self.metric) / self.d
        if self.metric.symmetric:
            return G[:, self._triu[0], self._triu[1]]
        return G.reshape(G.shape[0], -1)

    def _check(self, V: np.ndarray) -> np.ndarray:
        V = np.asarray(V, dtype=np.float64)
        if V.ndim != 3 or V.shape[1:] != (self.n, self.d):
            raise ValueError(f"expected vectors of shape (B, {self.n}, {self.d}), got {V.shape}")
        return V

    def vjp(self, V: np.ndarray, need_pullback: bool = True):
        """Batched forward; outputs are ``(B, d**k)`` arrays, one per order."""
        V = self._check(V)
        coeffs, net_pullback = self.coeff_net.vjp(self.features(V), need_pullback)
        if coeffs.shape[-1] != self.n_terms:
            raise ValueError(f"coefficient network emits {coeffs.shape[-1]} values for {self.n_terms} terms")
        outs, stacks, start = [], [], 0
        for k in self.orders:
            T = len(self.terms[k])
            stack = self.evaluators[k].evaluate(V)
            outs.append(np.einsum("bt,btk->bk", coeffs[:, start : start + T], stack))
            stacks.append(stack)
            start += T
        if not need_pullback:
            return outs, None

        def pullback(douts: Sequence[np.ndarray]) -> list[np.ndarray]:
            dcoeff = np.concatenate([np.einsum("bk,btk->bt", dy, s) for dy, s in zip(douts, stacks)], axis=1)
            return net_pullback(dcoeff)[0]

        return outs, pullback

    def forward_batch(self, V: np.ndarray) -> list[np.ndarray]:
        return self.vjp(V, need_pullback=False)[0]

    def forward(self, vectors: Sequence[TensorValue]):
        """Single input; returns a :class:`TensorValue` or a list when several orders are set."""
        if len(vectors) != self.n:
            raise ValueError(f"model takes {self.n} vectors, got {len(vectors)}")
        if any(v.order != 1 or v.dim != self.d for v in vectors):
            raise ValueError(f"inputs must be vectors of dimension {self.d}")
        V = np.stack([v.data for v in vectors])[None]
        outs = [TensorValue(y.reshape((self.d,) * k), 1, self.d) for y, k in zip(self.forward_batch(V), self.orders)]
        return outs[0] if len(outs) == 1 else outs

    __call__ = forward

    def act(self, g, outputs):
        if isinstance(outputs, TensorValue):
            return group_act(g, outputs)
        return [group_act(g, o) for o in outputs]


class EigenEquivariantModel:
    """Symmetric matrix function ``A = Q diag(lam) Q^T -> Q diag(f(lam)) Q^T``.

    ``eig_net`` acts on ``(B, d, 1)`` eigenvalue columns and must be
    permutation equivariant along the ``d`` axis; plain callables are allowed
    for fixed functions.  Eigenvalues are standardized with the fixed
    ``in_shift``/``in_scale`` before the net and mapped back with
    ``out_shift``/``out_scale``; both are affine maps applied to every
    eigenvalue, so equivariance is unaffected.
    """

    def __init__(
        self,
        d: int,
        eig_net,
        in_shift: float = 0.0,
        in_scale: float = 1.0,
        out_shift: float = 0.0,
        out_scale: float = 1.0,
        sym_tol: float = 1e-9,
    ):
        self.d = d
        self.eig_net = eig_net
        self.in_shift, self.in_scale = float(in_shift), float(in_scale)
        self.out_shift, self.out_scale = float(out_shift), float(out_scale)
        self.sym_tol = sym_tol

    @property
    def params(self) -> list[np.ndarray]:
        return getattr(self.eig_net, "params", [])

    def _eig(self, A: np.ndarray):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 3 or A.shape[1:] != (self.d, self.d):
            raise ValueError(f"expected matrices of shape (B, {self.d}, {self.d}), got {A.shape}")
        asym = np.max(np.abs(A - np.swapaxes(A, 1, 2))) if A.size else 0.0
        if asym > self.sym_tol * max(1.0, float(np.max(np.abs(A)))):
            raise ValueError(f"input is not symmetric (max asymmetry {asym:.2e})")
        return np.linalg.eigh(A)

    def vjp(self, A: np.ndarray, need_pullback: bool = True):
        lam, Q = self._eig(A)
        x = ((lam - self.in_shift) / self.in_scale)[..., None]
        if hasattr(self.eig_net, "vjp"):
            y, net_pullback = self.eig_net.vjp(x, need_pullback)
        else:
            y, net_pullback = self.eig_net(x), None
        mu = y[..., 0] * self.out_scale + self.out_shift
        out = np.einsum("bij,bj,bkj->bik", Q, mu, Q)
        out = 0.5 * (out + np.swapaxes(out, 1, 2))
        if not need_pullback:
            return out, None
        if net_pullback is None:
            raise TypeError("eig_net has no parameters to differentiate")

        def pullback(dout: np.ndarray) -> list[np.ndarray]:
            dsym = 0.5 * (dout + np.swapaxes(dout, 1, 2))
            dmu = np.einsum("bij,bik,bkj->bj", Q, dsym, Q)
            return net_pullback((dmu * self.out_scale)[..., None])[0]

        return out, pullback

    def forward_batch(self, A: np.ndarray) -> np.ndarray:
        return self.vjp(A, need_pullback=False)[0]

    def forward_sym(self, A: TensorValue) -> TensorValue:
        if A.order != 2 or A.dim != self.d:
            raise ValueError(f"expected an order-2 tensor of dimension {self.d}")
        return TensorValue(self.forward_batch(A.data[None])[0], 1, self.d)

    __call__ = forward_sym


@dataclass(frozen=True)
class GeneralBasisMap:
    """``(a_1..a_n) -> contract(a_ells[0] (x) ... (x) c, sum of input orders)``.

    ``ells`` are 0-based input indices in non-decreasing order and ``c`` is
    the isotropic tensor produced by ``sigma``.
    """

    ells: tuple[int, ...]
    input_specs: tuple[tuple[int, int], ...]
    output: tuple[int, int]
    sigma: tuple[int, ...]
    c: TensorValue

    @property
    def degree(self) -> int:
        return len(self.ells)


def _normalize_specs(specs) -> tuple[tuple[int, int], ...]:
    out = []
    for order, parity in specs:
        parity = {"+": 1, "-": -1}.get(parity, parity)
        if parity not in (1, -1) or order < 0:
            raise ValueError(f"bad tensor spec ({order}, {parity})")
        out.append((int(order), int(parity)))
    return tuple(out)


def enumerate_general_basis(
    input_specs,
    output,
    R: int,
    d: int,
    dedup: bool = True,
    max_order: int = MAX_ISOTROPIC_ORDER,
) -> list[GeneralBasisMap]:
    """Polynomial O(d)-equivariant maps of degree at most ``R``.

    One map per isotropic basis element of order ``sum(orders) + k'`` for each
    multiset of inputs.  With ``dedup`` the elements are first reduced to those
    that stay independent once repeated inputs are swapped.
    """
    specs = _normalize_specs(input_specs)
    (k_out, p_out), = _normalize_specs([output])
    metric = MetricSignature.euclidean(d)
    maps: list[GeneralBasisMap] = []
    for r in range(R + 1):
        for ells in combinations_with_replacement(range(len(specs)), r):
            k_in = sum(specs[l][0] for l in ells)
            parity = p_out
            for l in ells:
                parity *= specs[l][1]
            order = k_in + k_out
            if order > max_order:
                raise ValueError(
                    f"term with inputs {tuple(l + 1 for l in ells)} needs an isotropic tensor of order {order} > {max_order}"
                )
            if parity == 1 and order % 2:
                continue
            basis = isotropic_basis(order, parity, metric)
            if not len(basis):
                continue
            if dedup:
                basis = independent_subset(basis, _repeat_swaps(ells, specs, order))
            for sigma, c in basis.elements:
                maps.append(GeneralBasisMap(tuple(ells), specs, (k_out, p_out), sigma, c))
    return maps


def _repeat_swaps(ells, specs, order: int) -> list[tuple[int, ...]]:
    """Slot permutations swapping the blocks of equal consecutive inputs."""
    offsets = [0]
    for l in ells:
        offsets.append(offsets[-1] + specs[l][0])
    gens = []
    for q in range(len(ells) - 1):
        if ells[q] != ells[q + 1]:
            continue
        perm = list(range(order))
        a, b, c = offsets[q], offsets[q + 1], offsets[q + 2]
        perm[a:c] = list(range(b, c)) + list(range(a, b))
        gens.append(tuple(perm))
    return gens


def apply_general_basis(m: GeneralBasisMap, inputs: Sequence[TensorValue]) -> TensorValue:
    if len(inputs) != len(m.input_specs):
        raise ValueError(f"map takes {len(m.input_specs)} inputs, got {len(inputs)}")
    d = m.c.dim
    for a, (order, parity) in zip(inputs, m.input_specs):
        if a.order != order or a.parity != parity or a.dim != d:
            raise ValueError(f"input {a!r} does not match spec ({order}, {parity}) in dimension {d}")
    out = m.c.data
    for l in m.ells:
        a = inputs[l].data
        out = np.tensordot(a, out, axes=a.ndim)
    return TensorValue(out, m.output[1], d)


def combine_general_basis(maps: Sequence[GeneralBasisMap], beta: Sequence[float]) -> Callable:
    """The map ``inputs -> sum_i beta_i maps[i](inputs)``."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(maps),):
        raise ValueError("one coefficient per map")

    def f(inputs: Sequence[TensorValue]) -> TensorValue:
        acc = None
        for b, m in zip(beta, maps):
            val = apply_general_basis(m, inputs) * b
            acc = val if acc is None else acc + val
        return acc

    return f
