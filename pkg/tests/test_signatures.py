from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqtensor.experiments.signatures import (
    batch_discrete_signature,
    batch_signature,
    chen_product,
    discrete_signature_baseline,
    gen_poly_path,
    poly_points,
    signature_oracle,
)
from eqtensor.groups import sample_orthogonal
from eqtensor.tensor_core import TensorValue, group_act

from oracles import riemann_signature


def _power(v, k):
    out = np.array(1.0)
    for _ in range(k):
        out = np.multiply.outer(out, v)
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_linear_path_closed_form(seed, d):
    rng = np.random.default_rng(seed)
    x0, x1 = rng.standard_normal((2, d))
    sig = signature_oracle([TensorValue(x0), TensorValue(x1)], 4)
    for k, level in enumerate(sig, start=1):
        np.testing.assert_allclose(level.data, _power(x1 - x0, k) / factorial(k), atol=1e-12, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(2, 8))
def test_chen_identity(seed, m1, m2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m1 + m2 - 1, 3))
    first = signature_oracle(X[:m1], 4)
    second = signature_oracle(X[m1 - 1 :], 4)
    whole = signature_oracle(X, 4)
    for a, b in zip(chen_product(first, second), whole):
        np.testing.assert_allclose(a.data, b.data, atol=1e-12, rtol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_agrees_with_fine_quadrature(seed):
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-1, 1, size=(3, 4))
    sig = signature_oracle(poly_points(coeffs, 1000), 3)
    ref = riemann_signature(coeffs, 3, steps=10_000)
    for a, b in zip(sig, ref):
        assert np.linalg.norm(a.data - b) / np.linalg.norm(b) < 1e-3


def test_discrete_baseline_hand_cases():
    d1, d2, d3 = np.array([1.0, 0.0]), np.array([0.0, 2.0]), np.array([-1.0, 1.0])
    X = np.cumsum(np.stack([np.zeros(2), d1, d2, d3]), axis=0)
    s1, s2, s3 = (t.data for t in discrete_signature_baseline(X, 3))
    np.testing.assert_array_equal(s1, d1 + d2 + d3)
    np.testing.assert_array_equal(s2, np.outer(d1, d2) + np.outer(d1, d3) + np.outer(d2, d3))
    np.testing.assert_array_equal(s3, np.multiply.outer(np.outer(d1, d2), d3))
    # two points have no strictly increasing pair of increments
    two = discrete_signature_baseline(X[:2], 2)
    np.testing.assert_array_equal(two[1].data, np.zeros((2, 2)))


def test_batch_matches_single():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((5, 7, 3))
    exact = batch_signature(X, 3)
    disc = batch_discrete_signature(X, 3)
    for b in range(5):
        for k in range(3):
            np.testing.assert_allclose(exact[k][b], signature_oracle(X[b], 3)[k].data, rtol=1e-13, atol=1e-14)
            np.testing.assert_allclose(disc[k][b], discrete_signature_baseline(X[b], 3)[k].data, rtol=1e-13, atol=1e-14)


def test_signature_is_equivariant():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((6, 3))
    for _ in range(5):
        g = sample_orthogonal(3, rng)
        moved = signature_oracle(X @ g.matrix.T, 3)
        for a, b in zip(moved, signature_oracle(X, 3)):
            assert a.allclose(group_act(g, b), atol=1e-12)


def test_generated_path():
    sample = gen_poly_path(np.random.default_rng(6), d=3, degree=5, n=10, M=3)
    assert sample.points.shape == (10, 3) and sample.coefficients.shape == (3, 6)
    np.testing.assert_allclose(sample.signature[0], sample.points[-1] - sample.points[0], atol=1e-12)
    ref = riemann_signature(sample.coefficients, 3, steps=10_000)
    assert np.linalg.norm(sample.signature[2] - ref[2]) / np.linalg.norm(ref[2]) < 1e-3


def test_rejects_bad_paths():
    with pytest.raises(ValueError):
        signature_oracle(np.zeros((1, 3)), 2)
    with pytest.raises(ValueError):
        signature_oracle(np.zeros((3, 3)), 0)
    with pytest.raises(ValueError):
        chen_product(signature_oracle(np.eye(3), 2), signature_oracle(np.eye(3), 3))
