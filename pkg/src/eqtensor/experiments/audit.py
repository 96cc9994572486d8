"""Runtime equivariance checks.

The defect of ``f`` at ``(g, x)`` is ``|f(g.x) - g.f(x)|_F / (1 + |f(x)|_F)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..groups import GroupElement, _haar_orthogonal, sample_group
from ..models import EigenEquivariantModel, GeneralBasisMap, VecToTensorModel, apply_general_basis
from ..nn import DenseNet
from ..tensor_core import MetricSignature, TensorValue, apply_matrix
from .sparse import LearnedH, SymMatrixMLP

__all__ = ["defect", "equivariance_audit", "GROUPS", "group_metric"]

GROUPS = {
    "o3": MetricSignature.euclidean(3),
    "lorentz": MetricSignature.minkowski(1, 4),
    "sp4": MetricSignature.symplectic(4),
}


def group_metric(name: str) -> MetricSignature:
    try:
        return GROUPS[name]
    except KeyError:
        raise ValueError(f"unknown group {name!r}; expected one of {sorted(GROUPS)}") from None


def defect(fgx: np.ndarray, gfx: np.ndarray, fx: np.ndarray) -> float:
    return float(np.linalg.norm(fgx - gfx) / (1.0 + np.linalg.norm(fx)))


def _vec_model_trial(model: VecToTensorModel, g: GroupElement, rng) -> float:
    V = rng.standard_normal((1, model.n, model.d))
    gV = V @ g.matrix.T
    fx = model.forward_batch(V)
    fgx = model.forward_batch(gV)
    d = model.d
    worst = 0.0
    for k, a, b in zip(model.orders, fx, fgx):
        ga = apply_matrix(g.matrix, a[0].reshape((d,) * k))
        worst = max(worst, defect(b[0].reshape((d,) * k), ga, a[0]))
    return worst


def gapped_symmetric(rng: np.random.Generator, d: int, gap: float = 0.1) -> np.ndarray:
    """Symmetric matrix whose sorted eigenvalues differ by at least ``gap``."""
    lam = np.cumsum(gap + rng.exponential(1.0, size=d)) - d / 2
    Q = _haar_orthogonal(d, rng)
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T)


def _eigen_trial(model: EigenEquivariantModel, g: GroupElement, rng) -> float:
    A = gapped_symmetric(rng, model.d)
    M = g.matrix
    fx = model.forward_batch(A[None])[0]
    fgx = model.forward_batch((M @ A @ M.T)[None])[0]
    return defect(fgx, M @ fx @ M.T, fx)


def _rows_trial(model, g: GroupElement, rng) -> float:
    # rows transform as a_i -> M^T a_i, so h -> M^T h M
    A = rng.standard_normal((1, model.n, model.d))
    M = g.matrix
    fx = model.forward(A)[0]
    fgx = model.forward(A @ M)[0]
    return defect(fgx, M.T @ fx @ M, fx)


def _general_trial(maps_beta, g: GroupElement, rng) -> float:
    maps, beta = maps_beta
    specs = maps[0].input_specs
    d = maps[0].c.dim
    inputs = [TensorValue(rng.standard_normal((d,) * k), p, d) for k, p in specs]
    moved = [TensorValue(apply_matrix(g.matrix, a.data) * (g.det_sign if a.parity == -1 else 1), a.parity, d) for a in inputs]

    def f(xs):
        return sum(b * apply_general_basis(m, xs).data for b, m in zip(beta, maps))

    fx, fgx = f(inputs), f(moved)
    gfx = apply_matrix(g.matrix, fx)
    if maps[0].output[1] == -1:
        gfx = g.det_sign * gfx
    return defect(fgx, gfx, fx)


def _mlp_trial(net: DenseNet, g: GroupElement, rng) -> float:
    # vectors in, flattened vector outputs of the same count
    d = g.dim
    n = net.widths[0] // d
    V = rng.standard_normal((1, n * d))
    fx = net.forward(V)[0]
    fgx = net.forward((V.reshape(n, d) @ g.matrix.T).reshape(1, -1))[0]
    m = fx.size // d
    gfx = (fx.reshape(m, d) @ g.matrix.T).reshape(-1)
    return defect(fgx, gfx, fx)


def equivariance_audit(
    target,
    metric: MetricSignature | str = "o3",
    trials: int = 32,
    rng: np.random.Generator | None = None,
    trial_fn: Callable | None = None,
) -> float:
    """Max defect over ``trials`` fresh group elements and inputs.

    ``target`` is a :class:`VecToTensorModel`, :class:`EigenEquivariantModel`,
    :class:`LearnedH`, :class:`SymMatrixMLP`, a ``(maps, beta)`` pair of general
    basis maps with coefficients, or a :class:`DenseNet` acting on stacked
    vectors.  ``trial_fn(target, g, rng)`` overrides the dispatch.
    """
    if isinstance(metric, str):
        metric = group_metric(metric)
    rng = rng if rng is not None else np.random.default_rng(0)
    if trial_fn is None:
        if isinstance(target, VecToTensorModel):
            trial_fn = _vec_model_trial
        elif isinstance(target, EigenEquivariantModel):
            trial_fn = _eigen_trial
        elif isinstance(target, (LearnedH, SymMatrixMLP)):
            trial_fn = _rows_trial
        elif isinstance(target, tuple) and target and isinstance(target[0][0], GeneralBasisMap):
            trial_fn = _general_trial
        elif isinstance(target, DenseNet):
            trial_fn = _mlp_trial
        else:
            raise TypeError(f"no audit recipe for {type(target).__name__}")
    worst = 0.0
    for _ in range(trials):
        g = sample_group(metric, rng)
        worst = max(worst, trial_fn(target, g, rng))
    return worst
