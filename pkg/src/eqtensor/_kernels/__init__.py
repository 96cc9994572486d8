"""Hot loops for truncated signatures.

The compiled extension is used when it was built; otherwise a numpy
implementation with the same interface is selected.  Setting
``EQTENSOR_PURE_PYTHON=1`` forces the numpy route.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy_impl

_compiled = None
if os.environ.get("EQTENSOR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _sigkern as _compiled  # type: ignore[no-redef]
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def _impl(backend: str | None):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        return _compiled.batch_levels
    if backend == "numpy":
        return _numpy_impl.batch_levels
    raise ValueError(f"unknown backend {backend!r}")


def signature_levels(increments: np.ndarray, depth: int, exact: bool = True, backend: str | None = None) -> np.ndarray:
    """Flattened truncated signature levels 1..depth for ``(B, m, d)`` increments.

    ``exact=True`` gives the signature of the piecewise-linear path; ``False``
    gives the ordered Riemann sum over strictly increasing increment indices.
    """
    inc = np.asarray(increments, dtype=np.float64)
    if inc.ndim != 3:
        raise ValueError(f"expected (B, m, d) increments, got shape {inc.shape}")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    return _impl(backend)(inc, int(depth), bool(exact))


def split_levels(flat: np.ndarray, d: int, depth: int) -> list[np.ndarray]:
    """Undo the flattening: a list of ``(B,) + (d,)*k`` arrays."""
    out, start = [], 0
    for k in range(1, depth + 1):
        size = d**k
        out.append(flat[:, start : start + size].reshape((flat.shape[0],) + (d,) * k))
        start += size
    return out
