import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asad.nn import (Adam, AvgPool, BatchNorm, Conv, GlobalAvgPool, Linear, MaxPool, ReLU, Sequential,
                     ShapeError, adam_step, gradcheck, out_extent, softmax, softmax_cross_entropy)
from asad.nn import functional as F
from oracles import avgpool_naive, conv_naive, maxpool_naive, numeric_grad

rng0 = np.random.default_rng(1234)


# -- convolution -------------------------------------------------------------

def test_identity_kernel_passes_input_through():
    x = rng0.standard_normal((2, 1, 5, 7))
    out, _ = F.conv_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(out, x)


def test_all_ones_three_by_three_sums_to_nine():
    out, _ = F.conv_forward(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 9.0


def test_conv_matches_nested_loops_small_case():
    x = rng0.standard_normal((1, 1, 5, 6))
    w = rng0.standard_normal((1, 1, 3, 3))
    out, _ = F.conv_forward(x, w, None, 1, 1)
    assert np.abs(out - conv_naive(x, w, pad=(1, 1))).max() <= 1e-12


def test_conv_is_cross_correlation_not_convolution():
    x = np.zeros((1, 1, 3, 3))
    x[0, 0, 0, 0] = 1.0
    w = np.arange(9.0).reshape(1, 1, 3, 3)
    out, _ = F.conv_forward(x, w, None, 1, 1)
    # the impulse at (0,0) meets kernel tap (1,1) at output (0,0)
    assert out[0, 0, 0, 0] == w[0, 0, 1, 1]


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_conv_matches_oracle_random_shapes(data):
    nd = data.draw(st.sampled_from([2, 3]))
    k = tuple(data.draw(st.integers(1, 3)) for _ in range(nd))
    s = tuple(data.draw(st.integers(1, 2)) for _ in range(nd))
    p = tuple(data.draw(st.integers(0, kk - 1)) for kk in k)
    sp = tuple(data.draw(st.integers(kk, kk + 4)) for kk in k)
    B, C, O = data.draw(st.integers(1, 2)), data.draw(st.integers(1, 3)), data.draw(st.integers(1, 3))
    r = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    x = r.standard_normal((B, C) + sp)
    w = r.standard_normal((O, C) + k)
    b = r.standard_normal(O)
    out, _ = F.conv_forward(x, w, b, s, p)
    ref = conv_naive(x, w, b, s, p)
    assert out.shape == ref.shape
    assert np.abs(out - ref).max() <= 1e-12


def test_conv_large_kernel_path_matches_oracle():
    # 64x17 taps take the im2col route
    x = rng0.standard_normal((2, 1, 8, 20))
    w = rng0.standard_normal((3, 1, 8, 17))
    out, _ = F.conv_forward(x, w, np.zeros(3))
    assert np.abs(out - conv_naive(x, w)).max() <= 1e-12


def test_conv_rejects_nonpositive_extent():
    with pytest.raises(ShapeError, match="axis"):
        F.conv_forward(np.zeros((1, 1, 2, 5)), np.zeros((1, 1, 3, 3)))


def test_conv_rejects_channel_mismatch():
    with pytest.raises(ShapeError):
        F.conv_forward(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)))


def test_conv_backward_zero_grad_gives_zero():
    conv = Conv(2, 3, (3, 3), padding=1, rng=np.random.default_rng(0), dtype=np.float64)
    x = rng0.standard_normal((2, 2, 4, 5))
    y = conv(x)
    gx = conv.backward(np.zeros_like(y))
    assert not gx.any() and not conv.weight.grad.any() and not conv.bias.grad.any()


def test_conv_backward_identity_kernel():
    x = rng0.standard_normal((2, 1, 4, 5))
    out, cache = F.conv_forward(x, np.ones((1, 1, 1, 1)))
    g = rng0.standard_normal(out.shape)
    gx, _, _ = F.conv_backward(g, cache, np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(gx, g)


@pytest.mark.parametrize("kernel,stride,pad", [((3, 3), (1, 1), (1, 1)), ((3, 3), (2, 2), (1, 1)),
                                               ((3, 3, 1), (1, 1, 1), (1, 1, 0)), ((2, 2, 3), (1, 2, 2), (0, 0, 1))])
def test_conv_backward_matches_finite_differences(kernel, stride, pad):
    r = np.random.default_rng(7)
    x = r.standard_normal((2, 2) + tuple(kk + 3 for kk in kernel))
    w = r.standard_normal((3, 2) + kernel)
    b = r.standard_normal(3)
    out, cache = F.conv_forward(x, w, b, stride, pad)
    proj = r.standard_normal(out.shape)
    gx, gw, gb = F.conv_backward(proj, cache, w)

    def f():
        return float((F.conv_forward(x, w, b, stride, pad)[0] * proj).sum())

    for arr, g in ((x, gx), (w, gw), (b, gb)):
        idx = r.choice(arr.size, size=min(10, arr.size), replace=False)
        num = np.array([numeric_grad(f, arr, i) for i in idx])
        ana = g.reshape(-1)[idx]
        assert np.abs(num - ana).max() / np.abs(ana).max() <= 1e-6


# -- shape formula -------------------------------------------------------------

@given(n=st.integers(1, 40), k=st.integers(1, 9), s=st.integers(1, 4), p=st.integers(0, 4))
def test_shape_formula_every_layer(n, k, s, p):
    expected = (n + 2 * p - k) // s + 1
    if expected < 1:
        with pytest.raises(ShapeError):
            out_extent(n, k, s, p)
        return
    assert out_extent(n, k, s, p) == expected
    if p < k:
        x = np.zeros((1, 1, n, 1))
        out, _ = F.maxpool_forward(x, (k, 1), (s, 1), (p, 0))
        assert out.shape[2] == expected
    if p == 0:
        out, _ = F.avgpool_forward(np.zeros((1, 1, n, 1)), (k, 1), (s, 1))
        assert out.shape[2] == expected


# -- relu ------------------------------------------------------------------------

def test_relu_gradient_away_from_kink():
    x = rng0.standard_normal((3, 4, 5))
    x = np.where(np.abs(x) < 1e-3, 1e-3 + np.abs(x), x)
    g = rng0.standard_normal(x.shape)
    ana = F.relu_backward(g, x)
    f = lambda: float((F.relu(x) * g).sum())  # noqa: E731
    idx = rng0.choice(x.size, 10, replace=False)
    num = np.array([numeric_grad(f, x, i) for i in idx])
    assert np.abs(num - ana.reshape(-1)[idx]).max() / max(np.abs(num).max(), 1e-300) <= 1e-6


# -- batch norm --------------------------------------------------------------------

def test_batchnorm_training_normalizes_per_channel():
    bn = BatchNorm(3, dtype=np.float64)
    x = rng0.standard_normal((8, 3, 4, 5)) * 3 + 2
    y = bn(x)
    assert np.allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-12)
    assert np.allclose(y.var(axis=(0, 2, 3)), 1, atol=1e-4)


def test_batchnorm_eval_is_idempotent_and_affine():
    bn = BatchNorm(2, dtype=np.float64)
    bn(rng0.standard_normal((4, 2, 3, 3)))
    bn.eval()
    stats = [bn.running_mean.copy(), bn.running_var.copy()]
    x = rng0.standard_normal((3, 2, 3, 3))
    y1, y2 = bn(x), bn(x)
    np.testing.assert_array_equal(y1, y2)
    np.testing.assert_array_equal(stats[0], bn.running_mean)
    np.testing.assert_array_equal(stats[1], bn.running_var)
    assert (bn.running_var > 0).all()
    # affine: f(a) + f(b) - f(0) == f(a + b)
    z = np.zeros_like(x)
    assert np.allclose(bn(x) + bn(2 * x) - bn(z), bn(3 * x), atol=1e-12)


def test_batchnorm_constant_channel_uses_epsilon_floor():
    bn = BatchNorm(1, dtype=np.float64)
    y = bn(np.full((4, 1, 2, 2), 3.0))
    assert np.isfinite(y).all() and np.allclose(y, 0)


def test_batchnorm_gradient():
    bn = BatchNorm(3, dtype=np.float64)
    bn.gamma.value[:] = rng0.standard_normal(3)
    bn.beta.value[:] = rng0.standard_normal(3)
    rep = gradcheck(bn, rng0.standard_normal((4, 3, 3, 2)), samples=10)
    assert rep.max_error <= 1e-5, dict(rep.errors)


# -- pooling -------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.data())
def test_maxpool_matches_oracle(data):
    nd = data.draw(st.sampled_from([2, 3]))
    k = tuple(data.draw(st.integers(1, 3)) for _ in range(nd))
    s = tuple(data.draw(st.integers(1, 2)) for _ in range(nd))
    p = tuple(data.draw(st.integers(0, kk // 2)) for kk in k)
    sp = tuple(data.draw(st.integers(kk, kk + 4)) for kk in k)
    r = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    x = r.standard_normal((2, 2) + sp)
    out, _ = F.maxpool_forward(x, k, s, p)
    np.testing.assert_array_equal(out, maxpool_naive(x, k, s, p))


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_avgpool_matches_oracle(data):
    nd = data.draw(st.sampled_from([2, 3]))
    k = tuple(data.draw(st.integers(1, 3)) for _ in range(nd - 1)) + (data.draw(st.integers(1, 7)),)
    s = tuple(data.draw(st.integers(1, 3)) for _ in range(nd))
    sp = tuple(data.draw(st.integers(kk, kk + 5)) for kk in k)
    r = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    x = r.standard_normal((2, 2) + sp)
    out, _ = F.avgpool_forward(x, k, s)
    assert np.abs(out - avgpool_naive(x, k, s)).max() <= 1e-12


def test_maxpool_tie_goes_to_first_and_routes_all_gradient():
    x = np.ones((1, 1, 2, 2))
    out, cache = F.maxpool_forward(x, (2, 2), (2, 2))
    gx = F.maxpool_backward(np.full(out.shape, 5.0), cache)
    assert gx[0, 0, 0, 0] == 5.0 and gx.sum() == 5.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), stride=st.integers(1, 3))
def test_maxpool_backward_routes_each_window_to_one_cell(seed, stride):
    r = np.random.default_rng(seed)
    x = r.standard_normal((1, 1, 6, 7))
    out, cache = F.maxpool_forward(x, (3, 3), (stride, stride), (1, 1))
    for pos in np.ndindex(out.shape):
        g = np.zeros(out.shape)
        g[pos] = 1.0
        gx = F.maxpool_backward(g, cache)
        assert np.count_nonzero(gx) == 1 and gx.sum() == 1.0
        assert x[np.unravel_index(gx.argmax(), gx.shape)] == out[pos]


def test_global_avg_pool_matches_mean():
    x = rng0.standard_normal((2, 3, 4, 5, 6))
    assert np.abs(GlobalAvgPool()(x) - x.mean(axis=(2, 3, 4))).max() <= 1e-12


@pytest.mark.parametrize("module,shape", [
    (MaxPool((3, 3), 2, 1), (2, 2, 6, 7)),
    (AvgPool((2, 2, 7), (1, 1, 3)), (1, 2, 3, 4, 13)),
    (GlobalAvgPool(), (2, 3, 4, 5)),
])
def test_pool_gradients(module, shape):
    rep = gradcheck(module, np.random.default_rng(3).standard_normal(shape), samples=20)
    assert rep.max_error <= 1e-6


# -- linear / softmax ------------------------------------------------------------------

def test_linear_gradient():
    lin = Linear(6, 3, rng=np.random.default_rng(0), dtype=np.float64)
    rep = gradcheck(lin, rng0.standard_normal((4, 6)), samples=10)
    assert rep.max_error <= 1e-7


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6), st.integers(1, 5))
def test_softmax_rows_are_distributions(row, n):
    p = softmax(np.tile(np.array(row), (n, 1)))
    assert (p >= 0).all()
    assert np.abs(p.sum(axis=1) - 1).max() <= 1e-12


def test_softmax_cross_entropy_gradient():
    logits = rng0.standard_normal((5, 3))
    labels = np.array([0, 2, 1, 1, 0])
    _, grad = softmax_cross_entropy(logits, labels)
    for i in range(logits.size):
        num = numeric_grad(lambda: softmax_cross_entropy(logits, labels)[0], logits, i)
        assert abs(num - grad.reshape(-1)[i]) / np.abs(grad).max() <= 1e-6


def test_cross_entropy_rejects_bad_label():
    with pytest.raises(ValueError):
        softmax_cross_entropy(np.zeros((2, 2)), np.array([0, 2]))


# -- adam --------------------------------------------------------------------------------

def _quadratic_param(x0):
    from asad.nn import Parameter
    from collections import OrderedDict
    return OrderedDict(x=Parameter(np.array([x0], dtype=np.float64)))


def test_adam_first_step_moves_by_learning_rate():
    # bias correction makes the first update lr * g / (|g| + eps)
    params = _quadratic_param(3.0)
    opt = Adam(params, lr=0.1, eps=1e-8)
    params["x"].grad[:] = 2 * params["x"].value
    opt.step()
    assert abs(params["x"].value[0] - (3.0 - 0.1 * 6.0 / (6.0 + 1e-8))) <= 1e-15
    assert abs(params["x"].value[0] - 2.9) <= 1e-9


def test_adam_decreases_convex_quadratic_monotonically():
    params = _quadratic_param(3.0)
    opt = Adam(params, lr=0.05)
    losses = []
    for _ in range(3):
        opt.zero_grad()
        x = params["x"].value
        losses.append(float(x[0] ** 2))
        params["x"].grad += 2 * x
        opt.step()
    assert losses[0] > losses[1] > losses[2]
    assert opt.step_count == 3


def test_adam_matches_reference_recursion():
    r = np.random.default_rng(5)
    params = _quadratic_param(0.0)
    opt = Adam(params, lr=1e-3)
    m = v = 0.0
    x = 0.0
    for t in range(1, 6):
        g = r.standard_normal()
        adam_step([params["x"]], [np.array([g])], opt)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 1e-3 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert abs(params["x"].value[0] - x) <= 1e-15
    state = opt.state()
    assert state["adam.m.x"].shape == params["x"].value.shape


def test_adam_zero_learning_rate_leaves_parameters():
    params = _quadratic_param(1.5)
    opt = Adam(params, lr=0.0)
    for _ in range(4):
        params["x"].grad[:] = 1.0
        opt.step()
    assert params["x"].value[0] == 1.5


# -- module plumbing -------------------------------------------------------------------

def test_grad_is_zeroed_and_finite_after_pass():
    net = Sequential(Conv(1, 2, (3, 3), padding=1, dtype=np.float64), ReLU(), GlobalAvgPool(),
                     Linear(2, 2, dtype=np.float64))
    x = rng0.standard_normal((3, 1, 4, 4))
    for _ in range(2):
        net.zero_grad()
        assert all(not p.grad.any() for p in net.parameters().values())
        _, g = softmax_cross_entropy(net(x), np.array([0, 1, 0]))
        net.backward(g)
        for p in net.parameters().values():
            assert p.grad.shape == p.value.shape and np.isfinite(p.grad).all()


def test_parameter_names_are_unique_and_dotted():
    net = Sequential(Conv(1, 2, (3, 3)), BatchNorm(2), names=["conv", "bn"])
    names = list(net.parameters())
    assert names == ["conv.weight", "conv.bias", "bn.gamma", "bn.beta"]
    assert list(net.buffers()) == ["bn.running_mean", "bn.running_var"]


def test_gradcheck_requires_float64():
    with pytest.raises(TypeError):
        gradcheck(Linear(2, 2), np.zeros((1, 2), dtype=np.float32))


def test_gradcheck_detects_a_wrong_gradient():
    lin = Linear(3, 2, dtype=np.float64)
    orig = lin.backward

    def broken(grad):
        gx = orig(grad)
        lin.weight.grad *= 1.1
        return gx

    lin.backward = broken
    rep = gradcheck(lin, rng0.standard_normal((2, 3)))
    assert rep.errors["weight"] > 1e-3
