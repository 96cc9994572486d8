"""Neo-Hookean stress-strain data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor_core import TensorValue

__all__ = ["NeoHookeanSample", "gen_neohookean", "neohookean_stress", "neohookean_batch"]

MAX_RESAMPLE = 100
MIN_DET = 0.2


@dataclass(frozen=True)
class NeoHookeanSample:
    C: TensorValue
    S: TensorValue
    lam: float
    mu: float


def neohookean_stress(C: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """Second Piola-Kirchhoff stress ``(lam/2 log det C - mu) C^-1 + mu I``; batched over leading axes."""
    C = np.asarray(C, dtype=np.float64)
    d = C.shape[-1]
    _, logdet = np.linalg.slogdet(C)
    Cinv = np.linalg.inv(C)
    S = (0.5 * lam * logdet - mu)[..., None, None] * Cinv + mu * np.eye(d)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def _sample_F(rng: np.random.Generator, d: int, eta: float) -> np.ndarray:
    for _ in range(MAX_RESAMPLE):
        F = np.eye(d) + eta * rng.standard_normal((d, d))
        if np.linalg.det(F) > MIN_DET:
            return F
    raise RuntimeError(f"no deformation gradient with det > {MIN_DET} after {MAX_RESAMPLE} draws")


def gen_neohookean(
    rng: np.random.Generator,
    lam: float = 1.0,
    mu: float = 0.5,
    eta: float = 0.1,
    d: int = 3,
    F: np.ndarray | None = None,
) -> NeoHookeanSample:
    """One (C, S) pair from ``F = I + eta G``; pass ``F`` to skip sampling."""
    if lam <= 0 or mu <= 0:
        raise ValueError("lam and mu must be positive")
    if not 0 < eta <= 0.5:
        raise ValueError("eta must lie in (0, 0.5]")
    if F is None:
        F = _sample_F(rng, d, eta)
    C = F.T @ F
    C = 0.5 * (C + C.T)
    S = neohookean_stress(C, lam, mu)
    return NeoHookeanSample(TensorValue(C), TensorValue(S), float(lam), float(mu))


def neohookean_batch(rng: np.random.Generator, count: int, lam: float, mu: float, eta: float, d: int = 3):
    """``(count, d, d)`` arrays of C and S."""
    C = np.empty((count, d, d))
    for i in range(count):
        F = _sample_F(rng, d, eta)
        C[i] = F.T @ F
    C = 0.5 * (C + np.swapaxes(C, 1, 2))
    return C, neohookean_stress(C, lam, mu)
