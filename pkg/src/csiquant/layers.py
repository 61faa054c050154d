"""Neural network layers as fused autograd operations.

Layouts are channels-last throughout: activations are (K, H, W, C) with an
optional leading batch axis, convolution kernels are (kh, kw, in_ch,
out_ch).  Convolutions use "same" zero padding; for even kernel extents
the extra padded row/column goes on the bottom/right.
"""

from __future__ import annotations

import numpy as np

from .autograd import Tensor, _check_finite


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _conv_forward(x4: np.ndarray, w: np.ndarray, off_h: int, off_w: int):
    """Shift-and-add convolution: one GEMM per kernel tap.

    Returns (out, padded) where padded is reused by the backward pass.
    """
    kh, kw, _, out_ch = w.shape
    batch, height, width, _ = x4.shape
    if kh == 1 and kw == 1:
        return x4 @ w[0, 0], x4
    padded = np.pad(x4, ((0, 0), (off_h, kh - 1 - off_h), (off_w, kw - 1 - off_w), (0, 0)))
    out = np.zeros((batch, height, width, out_ch))
    for dy in range(kh):
        for dx in range(kw):
            out += padded[:, dy:dy + height, dx:dx + width, :] @ w[dy, dx]
    return out, padded


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """2-D convolution with per-output-channel bias, same-size output."""
    w = weight.data
    if w.ndim != 4:
        raise ValueError("conv2d: weight must be (kh, kw, in_ch, out_ch)")
    kh, kw, in_ch, out_ch = w.shape
    if bias.data.shape != (out_ch,):
        raise ValueError("conv2d: bias must match output channels")

    single = x.data.ndim == 3
    x4 = x.data[None] if single else x.data
    if x4.ndim != 4 or x4.shape[3] != in_ch:
        raise ValueError(f"conv2d: input shape {x.data.shape} incompatible with kernel {w.shape}")
    batch, height, width, _ = x4.shape
    off_h = (kh - 1) // 2
    off_w = (kw - 1) // 2

    out, padded = _conv_forward(x4, w, off_h, off_w)
    out += bias.data
    if single:
        out = out[0]

    def backward(g):
        g4 = g[None] if single else g
        g4 = np.ascontiguousarray(g4)
        grad_b = g4.sum(axis=(0, 1, 2))
        grad_w = np.empty_like(w)
        if kh == 1 and kw == 1:
            grad_w[0, 0] = x4.reshape(-1, in_ch).T @ g4.reshape(-1, out_ch)
            grad_x = g4 @ w[0, 0].T
        else:
            flat_g = g4.reshape(-1, out_ch)
            for dy in range(kh):
                for dx in range(kw):
                    window = np.ascontiguousarray(padded[:, dy:dy + height, dx:dx + width, :])
                    grad_w[dy, dx] = window.reshape(-1, in_ch).T @ flat_g
            # adjoint of same-padding correlation: correlate with the
            # flipped, channel-transposed kernel at the mirrored offsets
            flipped = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
            grad_x, _ = _conv_forward(g4, flipped, kh - 1 - off_h, kw - 1 - off_w)
        if single:
            grad_x = grad_x[0]
        return grad_x, grad_w, grad_b

    return Tensor._from_op(out, (x, weight, bias), backward, "conv2d")


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight + bias`` for 1-D or row-batched 2-D input."""
    if weight.data.ndim != 2:
        raise ValueError("dense: weight must be 2-D")
    if x.data.ndim not in (1, 2) or x.data.shape[-1] != weight.data.shape[0]:
        raise ValueError(f"dense: input shape {x.data.shape} incompatible with weight {weight.data.shape}")
    if bias.data.shape != (weight.data.shape[1],):
        raise ValueError("dense: bias must match output width")
    out = x.data @ weight.data + bias.data

    def backward(g):
        if x.data.ndim == 1:
            return g @ weight.data.T, np.outer(x.data, g), g
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

    return Tensor._from_op(out, (x, weight, bias), backward, "dense")


def elu(x: Tensor) -> Tensor:
    """Exponential linear unit: x for x > 0, exp(x) - 1 otherwise."""
    pos = x.data > 0
    # expm1 of the clipped argument is exact on the negative branch and
    # cheap (zero) on the positive one; avoids overflow for large inputs
    neg_part = np.expm1(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, neg_part)
    _check_finite(out, "elu")

    def backward(g):
        return (g * np.where(pos, 1.0, neg_part + 1.0),)

    return Tensor._from_op(out, (x,), backward, "elu")


# outputs are squeezed one ulp inside their open ranges: float64 rounds
# tanh/sigmoid to exactly +/-1 beyond |x| ~ 19/37, but the ranges (-1, 1)
# and (0, 1) are contracts downstream (the quantizer domain is open)
_ONE_IN = np.nextafter(1.0, 0.0)
_ZERO_UP = np.nextafter(0.0, 1.0)


def tanh(x: Tensor) -> Tensor:
    out = np.clip(np.tanh(x.data), -_ONE_IN, _ONE_IN)
    _check_finite(out, "tanh")

    def backward(g):
        return (g * (1.0 - out * out),)

    return Tensor._from_op(out, (x,), backward, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    np.clip(out, _ZERO_UP, _ONE_IN, out=out)
    _check_finite(out, "sigmoid")

    def backward(g):
        return (g * out * (1.0 - out),)

    return Tensor._from_op(out, (x,), backward, "sigmoid")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, momentum: float, eps: float, train: bool) -> Tensor:
    """Per-channel batch normalization over the (batch, H, W) axes.

    Training mode uses biased batch statistics and folds them into the
    running buffers in place; eval mode reads the running buffers.
    """
    if x.data.ndim != 4:
        raise ValueError("batch_norm: input must be (batch, H, W, C)")
    count = x.data.shape[0] * x.data.shape[1] * x.data.shape[2]
    if train:
        if x.data.shape[0] < 2:
            raise ValueError("batch_norm: training requires batch size >= 2")
        mean = x.data.mean(axis=(0, 1, 2))
        var = x.data.var(axis=(0, 1, 2))
        running_mean[:] = momentum * running_mean + (1.0 - momentum) * mean
        running_var[:] = momentum * running_var + (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g):
        grad_gamma = np.einsum("khwc,khwc->c", g, xhat)
        grad_beta = g.sum(axis=(0, 1, 2))
        if train:
            g_mean = g.mean(axis=(0, 1, 2))
            gx_mean = grad_gamma / count
            grad_x = gamma.data * inv_std * (g - g_mean - xhat * gx_mean)
        else:
            grad_x = gamma.data * inv_std * g
        return grad_x, grad_gamma, grad_beta

    return Tensor._from_op(out, (x, gamma, beta), backward, "batch_norm")


class Conv2D:
    """Convolution layer owning its kernel and bias."""

    def __init__(self, kh: int, kw: int, in_ch: int, out_ch: int, rng: np.random.Generator):
        fan_in = kh * kw * in_ch
        fan_out = kh * kw * out_ch
        self.weight = Tensor(glorot_uniform((kh, kw, in_ch, out_ch), fan_in, fan_out, rng),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)

    def params(self):
        return [("w", self.weight), ("b", self.bias)]


class Dense:
    """Fully connected layer owning its matrix and bias."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.weight = Tensor(glorot_uniform((in_dim, out_dim), in_dim, out_dim, rng),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weight, self.bias)

    def params(self):
        return [("w", self.weight), ("b", self.bias)]


class BatchNorm:
    """Batch normalization layer with learnable scale/shift and running stats."""

    def __init__(self, channels: int, momentum: float = 0.99, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return batch_norm(x, self.gamma, self.beta, self.running_mean,
                          self.running_var, self.momentum, self.eps, train)

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def state(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]
