import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqtensor.nn import (
    Adam,
    ConstantNet,
    DenseNet,
    PermEquivariantNet,
    cosine_schedule,
    exponential_schedule,
    gelu,
    gelu_grad,
)

from oracles import finite_difference_grads, max_rel_error


def test_gelu_reference_values():
    assert gelu(np.array(0.0)) == 0.0
    assert gelu_grad(np.array(0.0)) == 0.5
    # x * Phi(x) at x = 1 with Phi(1) = 0.841344746...
    assert gelu(np.array(1.0)) == pytest.approx(0.8413447460685429, rel=1e-14)
    x = np.linspace(-4, 4, 41)
    fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6
    np.testing.assert_allclose(gelu_grad(x), fd, atol=1e-8)


def test_linear_layer_closed_form_gradient():
    rng = np.random.default_rng(0)
    net = DenseNet([4, 3], "gelu", rng)
    x = rng.standard_normal((5, 4))
    dy = rng.standard_normal((5, 3))
    grads, dx = net.vjp(x)[1](dy)
    np.testing.assert_allclose(grads[0], x.T @ dy, rtol=1e-14)
    np.testing.assert_allclose(grads[1], dy.sum(axis=0), rtol=1e-14)
    np.testing.assert_allclose(dx, dy @ net.params[0].T, rtol=1e-14)


@pytest.mark.parametrize("activation", ["gelu", "identity"])
def test_dense_gradients_match_finite_differences(activation):
    rng = np.random.default_rng(1)
    net = DenseNet([3, 5, 4, 2], activation, rng)
    for p in net.params[1::2]:
        p[:] = rng.standard_normal(p.shape) * 0.1
    x = rng.standard_normal((6, 3))
    w = rng.standard_normal((6, 2))
    loss = lambda: float(np.sum(w * net.forward(x) ** 2))
    y, pb = net.vjp(x)
    grads, _ = pb(2 * w * y)
    assert max_rel_error(grads, finite_difference_grads(loss, net.params)) < 1e-5


def test_perm_net_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    net = PermEquivariantNet((1, 4, 4, 1), "gelu", rng)
    x = rng.standard_normal((3, 5, 1))
    w = rng.standard_normal((3, 5, 1))
    loss = lambda: float(np.sum(w * net.forward(x) ** 2))
    y, pb = net.vjp(x)
    grads, dx = pb(2 * w * y)
    assert max_rel_error(grads, finite_difference_grads(loss, net.params)) < 1e-5
    fd_x = finite_difference_grads(loss, [x])
    assert max_rel_error([dx], fd_x) < 1e-5


def test_perm_net_is_permutation_equivariant():
    rng = np.random.default_rng(3)
    net = PermEquivariantNet(rng=rng)
    assert net.n_params == 2278
    x = rng.standard_normal((4, 7, 1))
    y = net(x)
    for _ in range(100):
        p = rng.permutation(7)
        np.testing.assert_allclose(net(x[:, p]), y[:, p], atol=1e-12)


def test_constant_net():
    net = ConstantNet([1.0, -2.0])
    out = net(np.zeros((3, 5)))
    assert out.shape == (3, 2) and np.all(out[:, 1] == -2.0)
    grads, _ = net.vjp(np.zeros((3, 5)))[1](np.ones((3, 2)))
    np.testing.assert_array_equal(grads[0], [3.0, 3.0])


def test_parameter_counts():
    assert DenseNet([55, 32, 32, 32, 1141]).n_params == 41_557
    assert DenseNet([30, 32, 32, 32, 39]).n_params == 4_391


def test_schedules():
    lr = cosine_schedule(1e-3, 100)
    assert lr(0) == 1e-3 and lr(100) == 0.0 and lr(50) == pytest.approx(5e-4)
    assert lr(200) == 0.0
    ex = exponential_schedule(1.0, 0.5, every=10)
    assert [ex(0), ex(9), ex(10), ex(25)] == [1.0, 1.0, 0.5, 0.25]


def _reference_adam(p, grads_fn, lr_fn, steps, b1=0.9, b2=0.999, eps=1e-8, wd=0.0):
    p = [float(v) for v in p]
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    for t in range(1, steps + 1):
        g = grads_fn(p)
        lr = lr_fn(t - 1)
        for i in range(len(p)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            mhat = m[i] / (1 - b1**t)
            vhat = v[i] / (1 - b2**t)
            p[i] = p[i] - lr * wd * p[i] - lr * mhat / (math.sqrt(vhat) + eps)
    return p


@pytest.mark.parametrize("wd", [0.0, 1e-2])
def test_adam_matches_reference_loop(wd):
    target = np.array([1.0, -2.0, 0.5])
    p = np.array([0.3, 0.1, -0.7])
    sched = cosine_schedule(0.05, 100)
    opt = Adam([p], sched, weight_decay=wd)
    for _ in range(100):
        opt.step([2 * (p - target)])
    ref = _reference_adam([0.3, 0.1, -0.7], lambda q: [2 * (a - b) for a, b in zip(q, target)], sched, 100, wd=wd)
    np.testing.assert_allclose(p, ref, rtol=1e-12, atol=1e-14)
    assert opt.t == 100


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_training_is_deterministic(seed):
    def run():
        rng = np.random.default_rng(seed)
        net = DenseNet([2, 8, 1], "gelu", rng)
        opt = Adam.adamw(net.params, 1e-2)
        x = rng.standard_normal((16, 2))
        y = np.sin(x[:, :1])
        for _ in range(100):
            out, pb = net.vjp(x)
            opt.step(pb(2 * (out - y) / len(x))[0])
        return np.concatenate([p.ravel() for p in net.params])

    np.testing.assert_array_equal(run(), run())


def test_rejects_mismatched_inputs():
    net = DenseNet([3, 2])
    with pytest.raises(ValueError):
        net(np.zeros((1, 4)))
    with pytest.raises(ValueError):
        DenseNet([3, 2], "tanh")
    with pytest.raises(ValueError):
        Adam(net.params, 1e-3).step([np.zeros(1)])
