"""Autoencoder for compressing cropped angular-delay channel matrices.

The encoder stacks residual refinement blocks over the (delay, antenna, 2)
image, then projects to an M-dimensional codeword squashed by tanh.  The
codeword is quantized to B bits; the decoder mirrors the projection and
refines with further residual blocks, ending in a sigmoid to match the
normalized input range.

Each residual block runs its input through a channel ladder 2 -> 8 -> 16
-> 2 and adds the result back onto the input.  Two block styles exist:
"jc" blocks combine three parallel convolution flows (row-then-column,
column-then-row, full 2-D), "plain" blocks use a single 2-D convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .layers import BatchNorm, Conv2D, Dense, elu, sigmoid, tanh
from .quantizer import (BitFlow, dequantize, pack, quantize, quantize_ste,
                        saturate_open_unit, unpack)

BLOCK_STYLES = ("jc", "plain")


@dataclass
class ModelConfig:
    """Shape and behavior of the autoencoder."""

    nc_crop: int = 32
    nt: int = 32
    M: int = 48
    B: int = 4
    block_style: str = "jc"
    quant_aware: bool = True
    encoder_resnets: int = 1
    decoder_resnets: int = 2

    def __post_init__(self):
        for field in ("nc_crop", "nt", "M"):
            if int(getattr(self, field)) < 1:
                raise ValueError(f"ModelConfig.{field} must be positive")
            setattr(self, field, int(getattr(self, field)))
        if not 1 <= int(self.B) <= 8:
            raise ValueError("ModelConfig.B must lie in [1, 8]")
        self.B = int(self.B)
        if self.block_style not in BLOCK_STYLES:
            raise ValueError(f"ModelConfig.block_style must be one of {BLOCK_STYLES}")
        for field in ("encoder_resnets", "decoder_resnets"):
            if int(getattr(self, field)) < 0:
                raise ValueError(f"ModelConfig.{field} must be >= 0")
            setattr(self, field, int(getattr(self, field)))
        self.quant_aware = bool(self.quant_aware)

    @property
    def feature_dim(self) -> int:
        return 2 * self.nc_crop * self.nt

    @property
    def num_bits(self) -> int:
        return self.M * self.B


class JCBlock:
    """Three parallel convolution flows concatenated and mixed 1x1.

    Flow 1 is a 1 x m row convolution then an m x 1 column convolution,
    each followed by elu; flow 2 is the transposed order; flow 3 is a
    plain m x m convolution with no activation.  The concatenated flows
    are combined by a 1 x 1 convolution with no activation.
    """

    def __init__(self, m: int, in_ch: int, out_ch: int, rng: np.random.Generator):
        self.f1a = Conv2D(1, m, in_ch, out_ch, rng)
        self.f1b = Conv2D(m, 1, out_ch, out_ch, rng)
        self.f2a = Conv2D(m, 1, in_ch, out_ch, rng)
        self.f2b = Conv2D(1, m, out_ch, out_ch, rng)
        self.f3 = Conv2D(m, m, in_ch, out_ch, rng)
        self.mix = Conv2D(1, 1, 3 * out_ch, out_ch, rng)

    def __call__(self, x: Tensor) -> Tensor:
        a = elu(self.f1b(elu(self.f1a(x))))
        b = elu(self.f2b(elu(self.f2a(x))))
        c = self.f3(x)
        return self.mix(ag.concat_last_dim([a, b, c]))

    def params(self):
        out = []
        for tag in ("f1a", "f1b", "f2a", "f2b", "f3", "mix"):
            layer = getattr(self, tag)
            out.extend((f"{tag}.{name}", t) for name, t in layer.params())
        return out


class PlainBlock:
    """Single m x m convolution, used as the baseline block style."""

    def __init__(self, m: int, in_ch: int, out_ch: int, rng: np.random.Generator):
        self.conv = Conv2D(m, m, in_ch, out_ch, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv(x)

    def params(self):
        return [(f"conv.{name}", t) for name, t in self.conv.params()]


def _make_block(style: str, m: int, in_ch: int, out_ch: int, rng):
    if style == "jc":
        return JCBlock(m, in_ch, out_ch, rng)
    return PlainBlock(m, in_ch, out_ch, rng)


class ResidualBlock:
    """Channel ladder 2 -> 8 -> 16 -> 2 with a shortcut connection.

    The first two stages are block -> elu -> batch norm; the last stage
    is a bare block whose output is added onto the input.
    """

    WIDTHS = (2, 8, 16, 2)

    def __init__(self, style: str, rng: np.random.Generator, m: int = 3):
        w = self.WIDTHS
        self.b0 = _make_block(style, m, w[0], w[1], rng)
        self.bn0 = BatchNorm(w[1])
        self.b1 = _make_block(style, m, w[1], w[2], rng)
        self.bn1 = BatchNorm(w[2])
        self.b2 = _make_block(style, m, w[2], w[3], rng)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        t = self.bn0(elu(self.b0(x)), train)
        t = self.bn1(elu(self.b1(t)), train)
        t = self.b2(t)
        return x + t

    def params(self):
        out = []
        for tag in ("b0", "bn0", "b1", "bn1", "b2"):
            for name, t in getattr(self, tag).params():
                out.append((f"{tag}.{name}", t))
        return out

    def state(self):
        out = []
        for tag in ("bn0", "bn1"):
            for name, arr in getattr(self, tag).state():
                out.append((f"{tag}.{name}", arr))
        return out


class Encoder:
    """Residual refinement, then a tanh-squashed projection to M values."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.resnets = [ResidualBlock(cfg.block_style, rng) for _ in range(cfg.encoder_resnets)]
        self.bn = BatchNorm(2)
        self.fc = Dense(cfg.feature_dim, cfg.M, rng)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        t = x
        for block in self.resnets:
            t = block(t, train)
        t = self.bn(elu(t), train)
        flat = ag.reshape(t, (t.shape[0], self.cfg.feature_dim))
        return tanh(self.fc(flat))

    def params(self):
        out = []
        for i, block in enumerate(self.resnets):
            out.extend((f"res{i}.{n}", t) for n, t in block.params())
        out.extend((f"bn.{n}", t) for n, t in self.bn.params())
        out.extend((f"fc.{n}", t) for n, t in self.fc.params())
        return out

    def state(self):
        out = []
        for i, block in enumerate(self.resnets):
            out.extend((f"res{i}.{n}", a) for n, a in block.state())
        out.extend((f"bn.{n}", a) for n, a in self.bn.state())
        return out


class Decoder:
    """Projection back to the image shape, then residual refinement."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.fc = Dense(cfg.M, cfg.feature_dim, rng)
        self.resnets = [ResidualBlock(cfg.block_style, rng) for _ in range(cfg.decoder_resnets)]

    def __call__(self, z: Tensor, train: bool) -> Tensor:
        t = self.fc(z)
        t = ag.reshape(t, (t.shape[0], self.cfg.nc_crop, self.cfg.nt, 2))
        for block in self.resnets:
            t = block(t, train)
        return sigmoid(t)

    def params(self):
        out = [(f"fc.{n}", t) for n, t in self.fc.params()]
        for i, block in enumerate(self.resnets):
            out.extend((f"res{i}.{n}", t) for n, t in block.params())
        return out

    def state(self):
        out = []
        for i, block in enumerate(self.resnets):
            out.extend((f"res{i}.{n}", a) for n, a in block.state())
        return out


class Autoencoder:
    """End-to-end codec: encode, quantize to a bit payload, decode."""

    def __init__(self, cfg: ModelConfig, rng=0):
        rng = np.random.default_rng(rng)
        self.cfg = cfg
        self.encoder = Encoder(cfg, rng)
        self.decoder = Decoder(cfg, rng)

    def forward(self, x: Tensor, train: bool) -> Tensor:
        """Reconstruction of a (batch, nc_crop, nt, 2) input.

        Training without quantization awareness bypasses the quantizer so
        its gradient-blocking rounding never enters the graph; evaluation
        always quantizes, matching the deployed bit pipeline.
        """
        if x.data.ndim != 4 or x.data.shape[1:] != (self.cfg.nc_crop, self.cfg.nt, 2):
            raise ValueError(
                f"forward: expected (batch, {self.cfg.nc_crop}, {self.cfg.nt}, 2), got {x.data.shape}")
        code = self.encoder(x, train)
        if train and not self.cfg.quant_aware:
            z = code
        else:
            z = quantize_ste(code, self.cfg.B)
        return self.decoder(z, train)

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Codewords (batch, M) before quantization, eval mode."""
        with ag.no_grad():
            return self.encoder(Tensor(x), False).data

    def infer(self, x: np.ndarray, batch_size: int = 128) -> np.ndarray:
        """Chunked eval-mode reconstruction of a (n, nc_crop, nt, 2) array."""
        x = np.asarray(x, dtype=np.float64)
        out = np.empty_like(x)
        with ag.no_grad():
            for lo in range(0, x.shape[0], batch_size):
                chunk = Tensor(x[lo:lo + batch_size])
                out[lo:lo + batch_size] = self.forward(chunk, train=False).data
        return out

    def encode_sample(self, h: np.ndarray) -> BitFlow:
        """Compress one (nc_crop, nt, 2) matrix to a packed payload."""
        code = self.encode(np.asarray(h, dtype=np.float64)[None])[0]
        levels = quantize(saturate_open_unit(code), self.cfg.B)
        return pack(levels, self.cfg.B)

    def decode_payload(self, flow: BitFlow) -> np.ndarray:
        """Reconstruct one (nc_crop, nt, 2) matrix from a packed payload."""
        if flow.count != self.cfg.M or flow.bits != self.cfg.B:
            raise ValueError("decode_payload: payload geometry does not match model")
        values = dequantize(unpack(flow), self.cfg.B)
        with ag.no_grad():
            return self.decoder(Tensor(values[None]), False).data[0]

    def params(self):
        out = [(f"enc.{n}", t) for n, t in self.encoder.params()]
        out.extend((f"dec.{n}", t) for n, t in self.decoder.params())
        return out

    def state(self):
        out = [(f"enc.{n}", a) for n, a in self.encoder.state()]
        out.extend((f"dec.{n}", a) for n, a in self.decoder.state())
        return out

    def zero_grad(self) -> None:
        for _, t in self.params():
            t.zero_grad()
