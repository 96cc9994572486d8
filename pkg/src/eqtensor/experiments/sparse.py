"""Planted sparse vector recovery: data, sum-of-squares estimators and learned estimators.

Rows ``a_i`` are the rows of the ``n x d`` orthonormal basis ``S``.  Every
estimator builds a symmetric ``d x d`` matrix ``h`` from the rows; the
estimate is ``S`` times the top eigenvector of ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..groups import _haar_orthogonal
from ..nn import DenseNet

__all__ = [
    "COVARIANCES",
    "LearnedH",
    "SCHEMES",
    "SparseVectorInstance",
    "SymMatrixMLP",
    "estimate_sparse",
    "gen_sparse_instance",
    "make_covariance",
    "recovery_loss_grad",
    "sample_sparse_vectors",
    "sos_h_hopkins",
    "sos_h_mao",
]

SCHEMES = ("AR", "BG", "CBG", "BR")
COVARIANCES = ("identity", "diagonal", "random")
AR_MAX_ATTEMPTS = 100_000


@dataclass(frozen=True)
class SparseVectorInstance:
    S: np.ndarray
    v: np.ndarray
    scheme: str
    covariance: str
    epsilon: float

    @property
    def rows(self) -> np.ndarray:
        return self.S


def _check_scheme(scheme: str, eps: float) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown sampling scheme {scheme!r}; expected one of {SCHEMES}")
    if not 0 < eps <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    if scheme == "CBG" and eps > 1 / 3:
        raise ValueError("the corrected Bernoulli-Gaussian scheme needs epsilon <= 1/3")


def sample_sparse_vectors(
    rng: np.random.Generator, scheme: str, n: int, eps: float, size: int = 1, normalize: bool = True
) -> np.ndarray:
    """``(size, n)`` sparse vectors; ``normalize=False`` returns the raw draws."""
    _check_scheme(scheme, eps)
    if scheme == "AR":
        out = np.empty((size, n))
        for s in range(size):
            for _ in range(AR_MAX_ATTEMPTS):
                v = rng.standard_normal(n)
                v /= np.linalg.norm(v)
                if np.sum(v**4) >= 1.0 / (eps * n):
                    out[s] = v
                    break
            else:
                raise RuntimeError(f"accept/reject found no vector in {AR_MAX_ATTEMPTS} attempts")
        return out
    mask = rng.random((size, n)) < eps
    if scheme == "BG":
        v = mask * rng.normal(scale=np.sqrt(1.0 / (eps * n)), size=(size, n))
    elif scheme == "CBG":
        q = np.sqrt((1.0 - eps) * (1.0 - 3.0 * eps) / 3.0)
        big = rng.normal(scale=np.sqrt((eps + q) / (eps * n)), size=(size, n))
        small = rng.normal(scale=np.sqrt((1.0 - eps - q) / ((1.0 - eps) * n)), size=(size, n))
        v = np.where(mask, big, small)
    else:
        signs = np.where(rng.random((size, n)) < 0.5, -1.0, 1.0)
        v = mask * signs / np.sqrt(eps * n)
    if normalize:
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        # an all-zero draw has no direction; redraw those rows
        for s in np.flatnonzero(norms[:, 0] == 0):
            v[s] = sample_sparse_vectors(rng, scheme, n, eps, 1, normalize=False)[0]
            norms[s] = np.linalg.norm(v[s])
            if norms[s] == 0:
                return sample_sparse_vectors(rng, scheme, n, eps, size, normalize)
        v = v / norms
    return v


def make_covariance(rng: np.random.Generator, kind: str, n: int) -> np.ndarray:
    if kind == "identity":
        return np.eye(n)
    if kind == "diagonal":
        return np.diag(rng.uniform(0.5, 1.5, size=n))
    if kind == "random":
        M = rng.standard_normal((n, n))
        return M @ M.T + 1e-5 * np.eye(n)
    raise ValueError(f"unknown covariance {kind!r}; expected one of {COVARIANCES}")


def gen_sparse_instance(
    rng: np.random.Generator,
    scheme: str,
    covariance: str,
    n: int,
    d: int,
    eps: float,
    sigma: np.ndarray | None = None,
) -> SparseVectorInstance:
    """Random orthonormal basis of ``span(v, v_1..v_{d-1})``.

    ``sigma`` fixes the noise covariance (shared across a dataset); when
    omitted a fresh one of the requested kind is drawn.
    """
    if d >= n:
        raise ValueError("need d < n")
    v = sample_sparse_vectors(rng, scheme, n, eps, 1)[0]
    if sigma is None:
        sigma = make_covariance(rng, covariance, n)
    if covariance == "identity":
        noise = rng.standard_normal((n, d - 1))
    else:
        L = np.linalg.cholesky(sigma)
        noise = L @ rng.standard_normal((n, d - 1))
    B = np.column_stack([v, noise])
    O = _haar_orthogonal(d, rng)
    Q, _ = np.linalg.qr(B @ O)
    return SparseVectorInstance(Q, v, scheme, covariance, float(eps))


def sos_h_hopkins(rows: np.ndarray, d: int | None = None, n: int | None = None) -> np.ndarray:
    """``sum_i (|a_i|^2 - d/n) a_i a_i^T``; rows are ``(..., n, d)``."""
    A = np.asarray(rows, dtype=np.float64)
    n = n or A.shape[-2]
    d = d or A.shape[-1]
    w = np.sum(A * A, axis=-1) - d / n
    return np.einsum("...i,...ij,...ik->...jk", w, A, A)


def sos_h_mao(rows: np.ndarray, d: int | None = None, n: int | None = None) -> np.ndarray:
    """``sum_i (|a_i|^2 - (d-1)/n) a_i a_i^T - (3/n) I_d``."""
    A = np.asarray(rows, dtype=np.float64)
    n = n or A.shape[-2]
    d = d or A.shape[-1]
    w = np.sum(A * A, axis=-1) - (d - 1) / n
    return np.einsum("...i,...ij,...ik->...jk", w, A, A) - (3.0 / n) * np.eye(d)


def top_eigenvector(h: np.ndarray) -> np.ndarray:
    try:
        _, U = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition failed: {exc}") from exc
    return U[..., :, -1]


def estimate_sparse(S: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``S`` times the unit top eigenvector of ``h`` (batched over leading axes)."""
    h = np.asarray(h, dtype=np.float64)
    if np.max(np.abs(h - np.swapaxes(h, -1, -2))) > 1e-9 * max(1.0, float(np.max(np.abs(h)))):
        raise ValueError("h must be symmetric")
    return np.einsum("...nd,...d->...n", S, top_eigenvector(h))


def recovery_score(v: np.ndarray, v_hat: np.ndarray) -> np.ndarray:
    """``<v, v_hat>^2`` per sample."""
    return np.einsum("...n,...n->...", v, v_hat) ** 2


def recovery_loss_grad(h: np.ndarray, w: np.ndarray, gap_floor: float = 1e-12):
    """Mean of ``1 - <u, w>^2`` with ``u`` the top eigenvector of each ``h``, and its gradient in ``h``.

    ``w = S^T v`` so that ``<S u, v> = <u, w>``.  The gradient uses first-order
    eigenvector perturbation and is symmetrized.
    """
    lam, U = np.linalg.eigh(h)
    u = U[..., :, -1]
    c = np.einsum("bi,bi->b", u, w)
    B = h.shape[0]
    loss = float(np.mean(1.0 - c * c))
    g = (-2.0 * c / B)[:, None] * w
    gaps = np.maximum(lam[:, -1:] - lam[:, :-1], gap_floor)
    coef = np.einsum("bik,bi->bk", U[:, :, :-1], g) / gaps
    X = np.einsum("bik,bk,bj->bij", U[:, :, :-1], coef, u)
    return loss, 0.5 * (X + np.swapaxes(X, 1, 2))


class LearnedH:
    """Equivariant learned ``h``.

    ``full``: coefficients for every symmetrized pair ``(a_i a_j^T + a_j a_i^T)/2``
    (``i <= j``) plus the identity, from the Gram matrix upper triangle.
    ``diag``: coefficients for each ``a_i a_i^T`` plus the identity, from the
    squared row norms.  Features are divided by ``d``.
    """

    def __init__(self, variant: str, n: int, d: int, hidden=(128, 128, 128), activation: str = "relu", rng=None):
        if variant not in ("full", "diag"):
            raise ValueError(f"unknown variant {variant!r}")
        self.variant, self.n, self.d = variant, n, d
        self._triu = np.triu_indices(n)
        n_in = len(self._triu[0]) if variant == "full" else n
        n_out = n_in + 1
        self.net = DenseNet([n_in, *hidden, n_out], activation, rng)

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params

    def features(self, A: np.ndarray) -> np.ndarray:
        if self.variant == "full":
            G = np.einsum("bid,bjd->bij", A, A) / self.d
            return G[:, self._triu[0], self._triu[1]]
        return np.sum(A * A, axis=-1) / self.d

    def _check(self, A: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=np.float64)
        if A.ndim == 2:
            A = A[None]
        if A.shape[1:] != (self.n, self.d):
            raise ValueError(f"expected rows of shape (B, {self.n}, {self.d}), got {A.shape}")
        return A

    def coefficient_matrix(self, q: np.ndarray) -> np.ndarray:
        """Symmetric ``(B, n, n)`` weights ``W`` with ``h = A^T W A + q_I I``."""
        B = q.shape[0]
        if self.variant == "full":
            W = np.zeros((B, self.n, self.n))
            W[:, self._triu[0], self._triu[1]] = q[:, :-1]
            return 0.5 * (W + np.swapaxes(W, 1, 2))
        W = np.zeros((B, self.n, self.n))
        idx = np.arange(self.n)
        W[:, idx, idx] = q[:, :-1]
        return W

    def h_from_coefficients(self, A: np.ndarray, q: np.ndarray) -> np.ndarray:
        A = self._check(A)
        W = self.coefficient_matrix(np.asarray(q, dtype=np.float64))
        return np.einsum("bid,bij,bje->bde", A, W, A) + q[:, -1, None, None] * np.eye(self.d)

    def vjp(self, A: np.ndarray, features: np.ndarray | None = None, need_pullback: bool = True):
        A = self._check(A)
        x = self.features(A) if features is None else features
        q, net_pullback = self.net.vjp(x, need_pullback)
        h = self.h_from_coefficients(A, q)
        if not need_pullback:
            return h, None

        def pullback(dh: np.ndarray) -> list[np.ndarray]:
            M = np.einsum("bid,bde,bje->bij", A, dh, A)
            if self.variant == "full":
                # each off-diagonal coefficient weights a_i a_j^T and a_j a_i^T by one half
                M = 0.5 * (M + np.swapaxes(M, 1, 2))
                dq = M[:, self._triu[0], self._triu[1]]
            else:
                dq = np.diagonal(M, axis1=1, axis2=2)
            dqI = np.trace(dh, axis1=1, axis2=2)[:, None]
            return net_pullback(np.concatenate([dq, dqI], axis=1))[0]

        return h, pullback

    def forward(self, A: np.ndarray) -> np.ndarray:
        return self.vjp(A, need_pullback=False)[0]

    __call__ = forward


class SymMatrixMLP:
    """Non-equivariant baseline: flattened rows to the upper triangle of ``h``."""

    def __init__(self, n: int, d: int, hidden=(128, 128, 128), activation: str = "relu", rng=None):
        self.n, self.d = n, d
        self._triu = np.triu_indices(d)
        self.net = DenseNet([n * d, *hidden, len(self._triu[0])], activation, rng)

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params

    def vjp(self, A: np.ndarray, need_pullback: bool = True):
        A = np.asarray(A, dtype=np.float64)
        B = A.shape[0]
        y, net_pullback = self.net.vjp(A.reshape(B, -1), need_pullback)
        h = np.zeros((B, self.d, self.d))
        h[:, self._triu[0], self._triu[1]] = y
        h[:, self._triu[1], self._triu[0]] = y
        if not need_pullback:
            return h, None

        def pullback(dh: np.ndarray) -> list[np.ndarray]:
            full = dh + np.swapaxes(dh, 1, 2)
            idx = np.arange(self.d)
            full[:, idx, idx] = dh[:, idx, idx]
            return net_pullback(full[:, self._triu[0], self._triu[1]])[0]

        return h, pullback

    def forward(self, A: np.ndarray) -> np.ndarray:
        return self.vjp(A, need_pullback=False)[0]

    __call__ = forward
