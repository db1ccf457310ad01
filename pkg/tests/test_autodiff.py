import math

import numpy as np
import pytest

from warpreg import autodiff
from warpreg.autodiff import (DenseNetwork, Workspace, backward, backward_dual,
                              forward, forward_cached, forward_with_jacobian,
                              init_xavier, input_jacobian, net_params)
from warpreg.errors import DimensionError


def zero_net(sizes):
    return DenseNetwork(list(sizes),
                        [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                        [np.zeros(o) for o in sizes[1:]])


def finite_diff_param_grad(net, loss_fn, h=1e-4):
    grads = autodiff.zero_gradient(net)
    for arr, garr in zip(net_params(net), grads.flat()):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            lp = loss_fn()
            arr[idx] = old - h
            lm = loss_fn()
            arr[idx] = old
            garr[idx] = (lp - lm) / (2.0 * h)
    return grads


def test_forward_zero_network():
    net = zero_net([3, 4, 2])
    out = forward(net, np.array([[0.3, -1.0, 2.0]]))
    assert np.array_equal(out, np.zeros((1, 2)))


def test_forward_identity_single_layer():
    net = DenseNetwork([2, 2], [np.eye(2)], [np.zeros(2)])
    out = forward(net, np.array([[0.3, 0.7]]))
    assert np.array_equal(out, np.array([[0.3, 0.7]]))


def test_forward_hand_composition():
    # 1 -> 1 -> 1, tanh hidden: y = 2 tanh(x)
    net = DenseNetwork([1, 1, 1], [np.array([[1.0]]), np.array([[2.0]])],
                       [np.zeros(1), np.zeros(1)])
    out = forward(net, np.array([[0.5]]))
    assert out[0, 0] == pytest.approx(2.0 * math.tanh(0.5), abs=1e-15)
    assert out[0, 0] == pytest.approx(0.9242343145214219, abs=1e-12)


def test_forward_dimension_mismatch_rejected():
    net = init_xavier([3, 8, 2], 0)
    with pytest.raises(DimensionError):
        forward(net, np.ones((4, 2)))


def test_forward_deterministic_bitwise():
    net = init_xavier([2, 16, 16, 2], 7)
    x = np.random.default_rng(1).uniform(-1, 1, (32, 2))
    a = forward(net, x)
    b = forward(net, x)
    assert np.array_equal(a, b)


def test_backward_zero_cotangents():
    net = init_xavier([2, 8, 2], 3)
    x = np.random.default_rng(0).uniform(-1, 1, (5, 2))
    _, cache = forward_cached(net, x)
    g = backward(net, cache, np.zeros((5, 2)))
    assert all(np.array_equal(a, np.zeros_like(a)) for a in g.flat())


def test_backward_linear_chain_rule():
    # y = w * x, loss = y, x = 0.5 -> dloss/dw = 0.5
    net = DenseNetwork([1, 1], [np.array([[2.0]])], [np.zeros(1)])
    _, cache = forward_cached(net, np.array([[0.5]]))
    g = backward(net, cache, np.array([[1.0]]))
    assert g.weights[0][0, 0] == pytest.approx(0.5, abs=1e-15)
    assert g.biases[0][0] == pytest.approx(1.0, abs=1e-15)


def test_backward_missing_cache_rejected():
    net = init_xavier([2, 8, 2], 3)
    with pytest.raises(ValueError):
        backward(net, [], np.zeros((5, 2)))


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(11)
    net = init_xavier([2, 32, 32, 32, 2], 42)
    x = rng.uniform(-1.0, 1.0, (8, 2))
    cot = rng.standard_normal((8, 2))
    _, cache = forward_cached(net, x)
    g = backward(net, cache, cot)
    fd = finite_diff_param_grad(net, lambda: float(np.sum(forward(net, x) * cot)))
    for a, b in zip(g.flat(), fd.flat()):
        rel = np.abs(a - b) / np.maximum(np.abs(b), 1e-8)
        assert rel.max() < 1e-6


def test_backward_linearity_in_losses():
    rng = np.random.default_rng(5)
    net = init_xavier([3, 16, 2], 9)
    x = rng.uniform(-1, 1, (6, 3))
    c1 = rng.standard_normal((6, 2))
    c2 = rng.standard_normal((6, 2))
    _, cache = forward_cached(net, x)
    g1 = backward(net, cache, c1)
    g2 = backward(net, cache, c2)
    gsum = backward(net, cache, c1 + c2)
    for a, b, s in zip(g1.flat(), g2.flat(), gsum.flat()):
        assert np.allclose(a + b, s, rtol=0, atol=1e-12)


def test_input_jacobian_zero_network():
    net = zero_net([3, 4, 2])
    dual = input_jacobian(net, np.ones((4, 3)), np.eye(3))
    assert np.array_equal(dual.directional_derivatives, np.zeros((4, 3, 2)))


def test_input_jacobian_linear_layer_equals_weights():
    W = np.array([[1.0, -2.0, 0.5], [3.0, 0.0, 1.0]])
    net = DenseNetwork([3, 2], [W], [np.array([0.1, -0.2])])
    seeds = np.eye(3)[:2]  # only the first two coordinates seeded
    dual = input_jacobian(net, np.array([[0.2, 0.4, -0.3]]), seeds)
    # directional derivative along e_k is column k of W
    assert np.allclose(dual.directional_derivatives[0], W[:, :2].T, atol=1e-15)


def test_input_jacobian_matches_finite_differences():
    rng = np.random.default_rng(2)
    net = init_xavier([3, 32, 32, 32, 2], 1)
    x = rng.uniform(-1.0, 1.0, (10, 3))
    dual = input_jacobian(net, x, np.eye(3))
    h = 1e-5
    for s in range(3):
        e = np.zeros(3)
        e[s] = h
        fd = (forward(net, x + e) - forward(net, x - e)) / (2.0 * h)
        rel = np.abs(fd - dual.directional_derivatives[:, s, :]) / \
            np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-6


def test_input_jacobian_seed_too_long_rejected():
    net = init_xavier([3, 8, 2], 0)
    with pytest.raises(DimensionError):
        input_jacobian(net, np.ones((2, 3)), np.eye(4))


def test_input_jacobian_linear_in_seeds():
    rng = np.random.default_rng(8)
    net = init_xavier([3, 16, 16, 2], 4)
    x = rng.uniform(-1, 1, (5, 3))
    e1 = rng.standard_normal(3)
    e2 = rng.standard_normal(3)
    a, b = 0.7, -1.3
    d1 = forward_with_jacobian(net, x, e1[None, :]).directional_derivatives
    d2 = forward_with_jacobian(net, x, e2[None, :]).directional_derivatives
    dc = forward_with_jacobian(net, x, (a * e1 + b * e2)[None, :]).directional_derivatives
    assert np.allclose(a * d1 + b * d2, dc, rtol=1e-12, atol=1e-14)


def test_backward_dual_matches_finite_differences():
    rng = np.random.default_rng(21)
    net = init_xavier([3, 16, 16, 2], 13)
    x = rng.uniform(-1, 1, (5, 3))
    seeds = np.eye(3)
    G = rng.standard_normal((5, 3, 2))
    cv = rng.standard_normal((5, 2))
    dual = forward_with_jacobian(net, x, seeds)
    g = backward_dual(net, dual, cv, G)

    def loss():
        d = forward_with_jacobian(net, x, seeds)
        return float(np.sum(d.directional_derivatives * G) + np.sum(d.values * cv))

    fd = finite_diff_param_grad(net, loss)
    for a, b in zip(g.flat(), fd.flat()):
        rel = np.abs(a - b) / np.maximum(np.abs(b), 1e-7)
        assert rel.max() < 1e-6


def test_workspace_matches_plain_api():
    rng = np.random.default_rng(3)
    net = init_xavier([4, 32, 32, 3], 77)
    x = rng.uniform(-1, 1, (257, 4))
    cot = rng.standard_normal((257, 3))
    y1, cache = forward_cached(net, x)
    g1 = backward(net, cache, cot)
    ws = Workspace(net, 257)
    y2 = autodiff.forward_ws(net, x, ws)
    g2 = autodiff.backward_ws(net, x, ws, cot)
    assert np.array_equal(y1, y2)
    for a, b in zip(g1.flat(), g2.flat()):
        assert np.allclose(a, b, rtol=1e-13, atol=1e-15)


def test_init_xavier_biases_zero_and_deterministic():
    net = init_xavier([2, 32, 32, 2], 123)
    assert all(np.array_equal(b, np.zeros_like(b)) for b in net.biases)
    net2 = init_xavier([2, 32, 32, 2], 123)
    for a, b in zip(net_params(net), net_params(net2)):
        assert np.array_equal(a, b)


def test_init_xavier_variance():
    # pooled weight entries of a 32 -> 32 layer over 10^4 seeds
    target = 2.0 / (32 + 32)
    total = 0.0
    total_sq = 0.0
    count = 0
    for seed in range(10000):
        w = init_xavier([32, 32, 2], seed).weights[0]
        total += w.sum()
        total_sq += float(np.sum(w * w))
        count += w.size
    var = total_sq / count - (total / count) ** 2
    assert abs(var - target) / target < 0.1


def test_init_xavier_rejects_no_hidden():
    with pytest.raises(ValueError):
        init_xavier([3, 2], 0)
