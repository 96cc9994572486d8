import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from eqtensor import _kernels
from eqtensor._kernels import _numpy_impl


def test_numpy_backend_matches_selected_backend():
    rng = np.random.default_rng(0)
    inc = rng.standard_normal((7, 13, 3)) * 0.3
    for exact in (True, False):
        for depth in (1, 2, 4):
            a = _kernels.signature_levels(inc, depth, exact)
            b = _kernels.signature_levels(inc, depth, exact, backend="numpy")
            np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-14)


@pytest.mark.skipif(_kernels.BACKEND != "cython", reason="compiled extension not built")
def test_compiled_backend_matches_numpy_on_edge_shapes():
    rng = np.random.default_rng(1)
    for shape in [(1, 1, 1), (2, 1, 4), (3, 50, 2), (1, 1000, 3)]:
        inc = rng.standard_normal(shape)
        for exact in (True, False):
            a = _kernels.signature_levels(inc, 3, exact, backend="cython")
            b = _numpy_impl.batch_levels(inc, 3, exact)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_environment_flag_forces_fallback():
    code = "import eqtensor._kernels as k; print(k.BACKEND)"
    env = dict(os.environ, EQTENSOR_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_split_levels_shapes():
    flat = np.arange(2 * (3 + 9 + 27), dtype=float).reshape(2, -1)
    levels = _kernels.split_levels(flat, 3, 3)
    assert [lv.shape for lv in levels] == [(2, 3), (2, 3, 3), (2, 3, 3, 3)]
    assert levels[1][1, 0, 0] == flat[1, 3]


def test_rejects_bad_backend():
    with pytest.raises(ValueError):
        _kernels.signature_levels(np.zeros((1, 2, 2)), 2, backend="fortran")
