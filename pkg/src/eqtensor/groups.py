"""Group elements of O(d), O(s, d-s) and Sp(d): sampling and membership checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .tensor_core import MetricSignature

__all__ = [
    "GroupElement",
    "MEMBERSHIP_TOL",
    "lorentz_boost",
    "lorentz_from_parts",
    "sample_group",
    "sample_lorentz",
    "sample_orthogonal",
    "sample_symplectic",
    "verify_membership",
]

MEMBERSHIP_TOL = 1e-10
# symplectic exponentials accumulate more rounding than orthogonal factorizations
SYMPLECTIC_TOL = 1e-8


def default_tol(metric: MetricSignature) -> float:
    return SYMPLECTIC_TOL if metric.kind == "symplectic" else MEMBERSHIP_TOL


def verify_membership(g, metric: MetricSignature) -> float:
    """Max-abs residual ``|g^T theta g - theta|`` for the metric's Gram matrix."""
    M = np.asarray(getattr(g, "matrix", g), dtype=np.float64)
    theta = metric.matrix()
    if M.shape != theta.shape:
        raise ValueError(f"matrix of shape {M.shape} does not match metric of dim {metric.dim}")
    return float(np.max(np.abs(M.T @ theta @ M - theta)))


@dataclass(frozen=True)
class GroupElement:
    """A ``d x d`` matrix tagged with the group it belongs to.

    ``det_sign`` is the value of the determinant character used for parity -1
    tensors; it is always +1 for symplectic matrices.
    """

    matrix: np.ndarray
    group: MetricSignature
    det_sign: int = field(default=0)
    tol: float = field(default=0.0, repr=False, compare=False)

    def __post_init__(self) -> None:
        M = np.array(self.matrix, dtype=np.float64)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        tol = self.tol or default_tol(self.group)
        residual = verify_membership(M, self.group)
        # residuals scale with the entries of M; boosts can have large entries
        scale = max(1.0, float(np.max(np.abs(M)))) ** 2
        if residual > tol * scale:
            raise ValueError(f"matrix is not in the group {self.group} (residual {residual:.3e})")
        if self.group.kind == "symplectic":
            sign = 1
        else:
            sign = 1 if np.linalg.det(M) > 0 else -1
        object.__setattr__(self, "det_sign", sign)

    @property
    def dim(self) -> int:
        return self.group.dim

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if other.group != self.group:
            raise ValueError("cannot multiply elements of different groups")
        tol = 10 * max(self.tol or default_tol(self.group), other.tol or default_tol(other.group))
        return GroupElement(self.matrix @ other.matrix, self.group, tol=tol)

    def inverse(self) -> "GroupElement":
        theta = self.group.matrix()
        # g^-1 = theta^-1 g^T theta for any form-preserving g
        inv = np.linalg.solve(theta, self.matrix.T @ theta)
        return GroupElement(inv, self.group, tol=10 * (self.tol or default_tol(self.group)))

    @classmethod
    def identity(cls, metric: MetricSignature) -> "GroupElement":
        return cls(np.eye(metric.dim), metric)


def _haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    # sign-correct so the distribution is Haar rather than QR-biased
    return Q * np.sign(np.diag(R))


def sample_orthogonal(d: int, rng: np.random.Generator) -> GroupElement:
    """Haar-distributed element of O(d)."""
    if d < 1:
        raise ValueError("d must be positive")
    return GroupElement(_haar_orthogonal(d, rng), MetricSignature.euclidean(d))


def lorentz_boost(beta) -> np.ndarray:
    """Pure boost matrix with velocity ``beta`` (time coordinate first)."""
    beta = np.asarray(beta, dtype=np.float64)
    b2 = float(beta @ beta)
    if b2 >= 1.0:
        raise ValueError("boost velocity must have norm < 1")
    gamma = 1.0 / np.sqrt(1.0 - b2)
    L = np.empty((4, 4))
    L[0, 0] = gamma
    L[0, 1:] = -gamma * beta
    L[1:, 0] = -gamma * beta
    spatial = np.eye(3)
    if b2 > 0:
        spatial += (gamma - 1.0) * np.outer(beta, beta) / b2
    L[1:, 1:] = spatial
    return L


def lorentz_from_parts(beta, Q: np.ndarray, B: int) -> GroupElement:
    """``T(B) Lambda(beta) R(Q)``: time flip, boost and spatial rotation."""
    T = np.eye(4)
    T[0, 0] = B
    R = np.eye(4)
    R[1:, 1:] = Q
    return GroupElement(T @ lorentz_boost(beta) @ R, MetricSignature.minkowski(1, 4))


def sample_lorentz(rng: np.random.Generator) -> GroupElement:
    """Element of O(1,3) from the bounded-boost recipe.

    Boost components are truncated-normal on ``[-1/sqrt(3), 1/sqrt(3)]`` so the
    speed stays below one; the rotation is Haar on O(3) and the time flip is a
    fair coin.
    """
    bound = 1.0 / np.sqrt(3.0)
    beta = stats.truncnorm.rvs(-bound, bound, size=3, random_state=rng)
    while float(beta @ beta) >= 1.0:  # only the corners of the cube reach norm 1
        beta = stats.truncnorm.rvs(-bound, bound, size=3, random_state=rng)
    Q = _haar_orthogonal(3, rng)
    B = 1 if rng.random() < 0.5 else -1
    return lorentz_from_parts(beta, Q, B)


def symplectic_from_symmetric(S: np.ndarray) -> GroupElement:
    """``exp(J_d S)``, which is symplectic for any symmetric ``S``."""
    S = np.asarray(S, dtype=np.float64)
    d = S.shape[0]
    metric = MetricSignature.symplectic(d)
    J = metric.matrix()
    return GroupElement(linalg.expm(J @ S), metric)


def sample_symplectic(d: int, rng: np.random.Generator) -> GroupElement:
    """Random element of Sp(d) as ``exp(J_d S)`` with ``S`` symmetric, entries N(0, 1/d)."""
    if d % 2:
        raise ValueError(f"symplectic group needs even d, got {d}")
    A = rng.normal(scale=np.sqrt(1.0 / d), size=(d, d))
    # symmetrize while keeping the N(0, 1/d) entry variance
    S = np.triu(A) + np.triu(A, 1).T
    return symplectic_from_symmetric(S)


def sample_group(metric: MetricSignature, rng: np.random.Generator) -> GroupElement:
    """Sample from the group preserving ``metric``.

    Minkowski sampling only exists for the (1, 3) Lorentz signature.
    """
    if metric.kind == "euclidean":
        return sample_orthogonal(metric.dim, rng)
    if metric.kind == "symplectic":
        return sample_symplectic(metric.dim, rng)
    if metric.s == 1 and metric.dim == 4:
        return sample_lorentz(rng)
    raise NotImplementedError(f"no sampler for {metric}")
