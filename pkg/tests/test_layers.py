import numpy as np
import pytest

from csiquant import autograd as ag
from csiquant.autograd import Tensor, finite_diff_check
from csiquant.layers import (BatchNorm, Conv2D, Dense, batch_norm, conv2d, dense,
                             elu, glorot_uniform, sigmoid, tanh)


def _conv_tensors(kh, kw, ci, co, weight=None):
    w = np.zeros((kh, kw, ci, co)) if weight is None else np.asarray(weight, float)
    return Tensor(w, requires_grad=True), Tensor(np.zeros(co), requires_grad=True)


def test_conv_1x1_single_weight_doubles_input():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(2, 5, 4, 1)))
    w, b = _conv_tensors(1, 1, 1, 1, np.full((1, 1, 1, 1), 2.0))
    out = conv2d(x, w, b)
    np.testing.assert_allclose(out.data, 2.0 * x.data)


def test_conv_3x3_ones_on_ones():
    x = Tensor(np.ones((3, 3, 1)))
    w, b = _conv_tensors(3, 3, 1, 1, np.ones((3, 3, 1, 1)))
    out = conv2d(x, w, b).data[..., 0]
    assert out[1, 1] == 9.0
    for i, j in [(0, 0), (0, 2), (2, 0), (2, 2)]:
        assert out[i, j] == 4.0
    for i, j in [(0, 1), (1, 0), (1, 2), (2, 1)]:
        assert out[i, j] == 6.0


def test_conv_1x3_zero_padding():
    x = Tensor(np.ones((1, 3, 1)))
    w, b = _conv_tensors(1, 3, 1, 1, np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1, 1))
    out = conv2d(x, w, b).data[0, :, 0]
    np.testing.assert_array_equal(out, [5.0, 6.0, 3.0])


def test_conv_bias_added():
    x = Tensor(np.zeros((2, 2, 1)))
    w, b = _conv_tensors(1, 1, 1, 3)
    b.data[:] = [1.0, -2.0, 0.5]
    out = conv2d(x, w, b)
    np.testing.assert_allclose(out.data, np.broadcast_to([1.0, -2.0, 0.5], (2, 2, 3)))


@pytest.mark.parametrize("kh,kw", [(1, 1), (1, 3), (3, 1), (3, 3), (2, 2)])
def test_conv_gradients(kh, kw):
    rng = np.random.default_rng(kh * 10 + kw)
    x = Tensor(rng.normal(size=(2, 4, 5, 3)))
    w = Tensor(rng.normal(size=(kh, kw, 3, 2)) * 0.3)
    b = Tensor(rng.normal(size=2) * 0.1)

    def loss(xt, wt, bt):
        out = conv2d(xt, wt, bt)
        return ag.sum_all(out * out)

    checks = [(x, lambda t: loss(t, w, b)),
              (w, lambda t: loss(x, t, b)),
              (b, lambda t: loss(x, w, t))]
    for target, f in checks:
        err = finite_diff_check(f, target)
        assert err < 1e-4, (kh, kw, target.shape, err)


def test_dense_identity_weight():
    x = Tensor(np.array([[1.0, -2.0], [0.5, 3.0]]))
    w = Tensor(np.eye(2))
    b = Tensor(np.zeros(2))
    np.testing.assert_array_equal(dense(x, w, b).data, x.data)


def test_dense_zero_input_gives_bias():
    w = Tensor(np.ones((3, 2)))
    b = Tensor(np.array([0.5, -1.5]))
    out = dense(Tensor(np.zeros((4, 3))), w, b)
    np.testing.assert_allclose(out.data, np.broadcast_to(b.data, (4, 2)))


def test_dense_wide_shape():
    rng = np.random.default_rng(1)
    layer = Dense(2048, 48, rng)
    assert layer.weight.data.shape == (2048, 48)
    out = layer(Tensor(rng.normal(size=(3, 2048)) * 0.01))
    assert out.shape == (3, 48)


def test_dense_gradients():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(3, 4)))
    w = Tensor(rng.normal(size=(4, 2)))
    b = Tensor(rng.normal(size=2))

    def loss(xt, wt, bt):
        out = dense(xt, wt, bt)
        return ag.sum_all(out * out)

    checks = [(x, lambda t: loss(t, w, b)),
              (w, lambda t: loss(x, t, b)),
              (b, lambda t: loss(x, w, t))]
    for target, f in checks:
        assert finite_diff_check(f, target) < 1e-4


def test_elu_closed_forms():
    x = Tensor(np.array([0.0, 1.0, -1.0]))
    out = elu(x).data
    np.testing.assert_allclose(out, [0.0, 1.0, np.expm1(-1.0)], atol=1e-15)
    assert out[2] == pytest.approx(-0.6321206, abs=1e-7)


def test_activation_ranges():
    x = Tensor(np.array([-50.0, -1.0, 0.0, 1.0, 50.0]))
    t = tanh(x).data
    s = sigmoid(x).data
    assert np.all(t > -1.0) and np.all(t < 1.0)
    assert np.all(s > 0.0) and np.all(s < 1.0)


@pytest.mark.parametrize("act", [elu, tanh, sigmoid])
def test_activation_gradients(act):
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
    assert finite_diff_check(lambda t: ag.sum_all(act(t) * act(t)), x) < 1e-4


def _bn_args(channels):
    gamma = Tensor(np.ones(channels), requires_grad=True)
    beta = Tensor(np.zeros(channels), requires_grad=True)
    return gamma, beta, np.zeros(channels), np.ones(channels)


def test_batch_norm_train_normalizes():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(2.0, 3.0, size=(8, 5, 6, 3)))
    gamma, beta, rm, rv = _bn_args(3)
    out = batch_norm(x, gamma, beta, rm, rv, momentum=0.99, eps=1e-5, train=True).data
    np.testing.assert_allclose(out.mean(axis=(0, 1, 2)), 0.0, atol=1e-8)
    np.testing.assert_allclose(out.var(axis=(0, 1, 2)), 1.0, atol=1e-4)


def test_batch_norm_zero_gamma_gives_beta():
    rng = np.random.default_rng(5)
    x = Tensor(rng.normal(size=(4, 3, 3, 2)))
    gamma, beta, rm, rv = _bn_args(2)
    gamma.data[:] = 0.0
    beta.data[:] = [1.5, -0.5]
    out = batch_norm(x, gamma, beta, rm, rv, momentum=0.99, eps=1e-5, train=True).data
    np.testing.assert_allclose(out, np.broadcast_to(beta.data, x.shape), atol=1e-12)


def test_batch_norm_eval_matches_train_at_batch_stats():
    rng = np.random.default_rng(6)
    x = Tensor(rng.normal(1.0, 2.0, size=(6, 4, 4, 3)))
    gamma, beta, rm, rv = _bn_args(3)
    gamma.data[:] = [0.5, 1.0, 2.0]
    beta.data[:] = [0.0, 1.0, -1.0]
    train_out = batch_norm(x, gamma, beta, rm.copy(), rv.copy(),
                           momentum=0.99, eps=1e-5, train=True).data
    mean = x.data.mean(axis=(0, 1, 2))
    var = x.data.var(axis=(0, 1, 2))
    eval_out = batch_norm(x, gamma, beta, mean, var,
                          momentum=0.99, eps=1e-5, train=False).data
    np.testing.assert_allclose(eval_out, train_out, atol=1e-12)


def test_batch_norm_updates_running_stats():
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(3.0, 2.0, size=(16, 2, 2, 1)))
    gamma, beta, rm, rv = _bn_args(1)
    batch_norm(x, gamma, beta, rm, rv, momentum=0.99, eps=1e-5, train=True)
    expected_mean = 0.99 * 0.0 + 0.01 * x.data.mean()
    expected_var = 0.99 * 1.0 + 0.01 * x.data.var()
    np.testing.assert_allclose(rm, [expected_mean], atol=1e-12)
    np.testing.assert_allclose(rv, [expected_var], atol=1e-12)


def test_batch_norm_eval_keeps_running_stats():
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(4, 2, 2, 2)))
    gamma, beta, rm, rv = _bn_args(2)
    batch_norm(x, gamma, beta, rm, rv, momentum=0.99, eps=1e-5, train=False)
    np.testing.assert_array_equal(rm, np.zeros(2))
    np.testing.assert_array_equal(rv, np.ones(2))


def test_batch_norm_rejects_singleton_batch():
    gamma, beta, rm, rv = _bn_args(2)
    with pytest.raises(ValueError):
        batch_norm(Tensor(np.zeros((1, 2, 2, 2))), gamma, beta, rm, rv,
                   momentum=0.99, eps=1e-5, train=True)


@pytest.mark.parametrize("train", [True, False])
def test_batch_norm_gradients(train):
    rng = np.random.default_rng(9)
    x = Tensor(rng.normal(size=(5, 3, 4, 2)))
    gamma = Tensor(rng.uniform(0.5, 1.5, size=2))
    beta = Tensor(rng.normal(size=2))
    rm = rng.normal(size=2)
    rv = rng.uniform(0.5, 2.0, size=2)

    def loss(xt, gt, bt):
        out = batch_norm(xt, gt, bt, rm.copy(), rv.copy(),
                         momentum=0.99, eps=1e-5, train=train)
        return ag.sum_all(out * out)

    checks = [(x, lambda t: loss(t, gamma, beta)),
              (gamma, lambda t: loss(x, t, beta)),
              (beta, lambda t: loss(x, gamma, t))]
    for target, f in checks:
        assert finite_diff_check(f, target) < 1e-4


def test_glorot_bounds():
    rng = np.random.default_rng(10)
    w = glorot_uniform((3, 3, 8, 16), fan_in=3 * 3 * 8, fan_out=3 * 3 * 16, rng=rng)
    limit = np.sqrt(6.0 / (3 * 3 * 8 + 3 * 3 * 16))
    assert np.all(np.abs(w) <= limit)
    assert np.abs(w).max() > 0.5 * limit


def test_layer_wrappers_expose_params():
    rng = np.random.default_rng(11)
    conv = Conv2D(3, 3, 2, 4, rng)
    fc = Dense(5, 3, rng)
    bn = BatchNorm(4)
    assert [n for n, _ in conv.params()] == ["w", "b"]
    assert [n for n, _ in fc.params()] == ["w", "b"]
    assert [n for n, _ in bn.params()] == ["gamma", "beta"]
    assert [n for n, _ in bn.state()] == ["running_mean", "running_var"]
