import numpy as np
import pytest

from eqtensor.experiments.audit import equivariance_audit
from eqtensor.experiments.sparse import (
    LearnedH,
    SymMatrixMLP,
    estimate_sparse,
    gen_sparse_instance,
    make_covariance,
    recovery_loss_grad,
    recovery_score,
    sample_sparse_vectors,
    sos_h_hopkins,
    sos_h_mao,
)

from oracles import finite_difference_grads, max_rel_error


def _hopkins_loop(A):
    n, d = A.shape
    h = np.zeros((d, d))
    for i in range(n):
        h += (A[i] @ A[i] - d / n) * np.outer(A[i], A[i])
    return h


def _mao_loop(A):
    n, d = A.shape
    h = -3.0 / n * np.eye(d)
    for i in range(n):
        h += (A[i] @ A[i] - (d - 1) / n) * np.outer(A[i], A[i])
    return h


def test_sos_estimators_match_loops():
    rng = np.random.default_rng(0)
    inst = [gen_sparse_instance(rng, "BG", "identity", 30, 4, 0.3) for _ in range(3)]
    A = np.stack([i.S for i in inst])
    for b in range(3):
        np.testing.assert_allclose(sos_h_hopkins(A)[b], _hopkins_loop(A[b]), rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(sos_h_mao(A)[b], _mao_loop(A[b]), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("scheme", ["AR", "BG", "CBG", "BR"])
def test_samples_are_unit_vectors(scheme):
    v = sample_sparse_vectors(np.random.default_rng(1), scheme, 50, 0.25, 200)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, rtol=1e-12)
    if scheme == "AR":
        assert np.all(np.sum(v**4, axis=1) >= 1 / (0.25 * 50))


def test_bernoulli_rademacher_support():
    raw = sample_sparse_vectors(np.random.default_rng(2), "BR", 40, 0.25, 500, normalize=False)
    assert set(np.unique(np.abs(raw))) <= {0.0, 1 / np.sqrt(0.25 * 40)}
    assert abs(np.mean(raw != 0) - 0.25) < 0.02


def test_sampling_arguments():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_sparse_vectors(rng, "XX", 10, 0.2)
    with pytest.raises(ValueError):
        sample_sparse_vectors(rng, "CBG", 10, 0.5)
    with pytest.raises(ValueError):
        make_covariance(rng, "banded", 10)
    with pytest.raises(ValueError):
        gen_sparse_instance(rng, "BG", "identity", 5, 5, 0.2)


@pytest.mark.parametrize("covariance", ["identity", "diagonal", "random"])
def test_instance_basis_contains_planted_vector(covariance):
    rng = np.random.default_rng(3)
    inst = gen_sparse_instance(rng, "BR", covariance, 40, 5, 0.25)
    np.testing.assert_allclose(inst.S.T @ inst.S, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(inst.S @ (inst.S.T @ inst.v), inst.v, atol=1e-12)
    assert recovery_score(inst.v, inst.S @ (inst.S.T @ inst.v)) == pytest.approx(1.0)


def test_estimate_is_sign_free_and_bounded():
    rng = np.random.default_rng(4)
    inst = gen_sparse_instance(rng, "BG", "identity", 60, 4, 0.2)
    h = sos_h_mao(inst.S)
    est = estimate_sparse(inst.S, h)
    assert recovery_score(inst.v, est) == pytest.approx(recovery_score(inst.v, -est))
    assert 0.0 <= recovery_score(inst.v, est) <= 1.0 + 1e-12
    with pytest.raises(ValueError):
        estimate_sparse(inst.S, h + np.triu(np.ones((4, 4)), 1))


def _rows(rng, B=3, n=12, d=3):
    return rng.standard_normal((B, n, d))


@pytest.mark.parametrize("variant", ["full", "diag"])
def test_learned_h_lies_in_equivariant_span(variant):
    rng = np.random.default_rng(5)
    model = LearnedH(variant, 12, 3, (16, 16), "relu", rng)
    A = _rows(rng, 1)[0]
    h = model(A[None])[0]
    if variant == "full":
        span = [np.eye(3)] + [0.5 * (np.outer(A[i], A[j]) + np.outer(A[j], A[i])) for i in range(12) for j in range(i, 12)]
    else:
        span = [np.eye(3)] + [np.outer(a, a) for a in A]
    basis = np.array([s.ravel() for s in span]).T
    coef, *_ = np.linalg.lstsq(basis, h.ravel(), rcond=None)
    np.testing.assert_allclose(basis @ coef, h.ravel(), atol=1e-10)
    np.testing.assert_allclose(h, h.T, atol=1e-14)


@pytest.mark.parametrize("variant", ["full", "diag"])
def test_learned_h_equivariance(variant):
    rng = np.random.default_rng(6)
    model = LearnedH(variant, 12, 3, (16, 16), "relu", rng)
    assert equivariance_audit(model, "o3", 32, rng) < 1e-9


def test_mlp_baseline_is_not_equivariant():
    rng = np.random.default_rng(7)
    model = SymMatrixMLP(12, 3, (16, 16), "relu", rng)
    assert equivariance_audit(model, "o3", 8, rng) > 1e-3


@pytest.mark.parametrize("make", [
    lambda rng: LearnedH("full", 6, 3, (8, 8), "relu", rng),
    lambda rng: LearnedH("diag", 6, 3, (8, 8), "relu", rng),
    lambda rng: SymMatrixMLP(6, 3, (8, 8), "relu", rng),
], ids=["full", "diag", "mlp"])
def test_h_model_gradients(make):
    rng = np.random.default_rng(8)
    model = make(rng)
    for p in model.params[1::2]:
        p[:] = 0.1 * rng.standard_normal(p.shape)
    A = rng.standard_normal((4, 6, 3))
    w = rng.standard_normal((4, 3, 3))
    loss = lambda: float(np.sum(w * model.forward(A) ** 2))
    h, pb = model.vjp(A)
    grads = pb(2 * w * h)
    assert max_rel_error(grads, finite_difference_grads(loss, model.params)) < 1e-5


def test_recovery_loss_gradient():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((5, 4, 4))
    h = X + np.swapaxes(X, 1, 2)
    w = rng.standard_normal((5, 4))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    loss, grad = recovery_loss_grad(h, w)
    eps = 1e-6
    fd = np.zeros_like(h)
    for b in range(5):
        for i in range(4):
            for j in range(i, 4):
                E = np.zeros_like(h)
                E[b, i, j] = E[b, j, i] = eps
                up = recovery_loss_grad(h + E, w)[0]
                down = recovery_loss_grad(h - E, w)[0]
                # a symmetric perturbation of (i, j) touches two entries off the diagonal
                scale = 1.0 if i == j else 2.0
                fd[b, i, j] = fd[b, j, i] = (up - down) / (2 * eps) / scale
    assert max_rel_error([grad], [fd]) < 1e-5
    assert 0.0 <= loss <= 1.0
