"""Uniform B-bit quantization of codewords in the open interval (-1, 1).

Levels are symmetric integers in [-(2**(B-1) - 1), 2**(B-1) - 1]; the
remaining two's-complement pattern (the most negative value) is never
produced and is rejected on unpack, which gives payload corruption a
detectable signature.  Packing is MSB-first two's complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor

_OPEN_UNIT = np.nextafter(1.0, 0.0)


class CorruptPayloadError(ValueError):
    """Raised when a packed payload fails a structural validity check."""


@dataclass(frozen=True)
class QuantSpec:
    """Codeword geometry: M values at B bits each (M*B feedback bits)."""

    M: int
    B: int

    def __post_init__(self):
        if int(self.M) < 1:
            raise ValueError("QuantSpec.M must be positive")
        _check_bits(self.B)

    @property
    def num_bits(self) -> int:
        return self.M * self.B

    def quantize(self, x) -> tuple:
        """Levels and their dequantized values for a length-M codeword."""
        arr = np.asarray(x, dtype=np.float64)
        if arr.shape != (self.M,):
            raise ValueError(f"QuantSpec.quantize: expected shape ({self.M},), got {arr.shape}")
        levels = quantize(arr, self.B)
        return levels, dequantize(levels, self.B)

    def encode(self, x) -> "BitFlow":
        levels, _ = self.quantize(x)
        return pack(levels, self.B)

    def decode(self, flow: "BitFlow") -> np.ndarray:
        if flow.count != self.M or flow.bits != self.B:
            raise ValueError("QuantSpec.decode: payload geometry mismatch")
        return dequantize(unpack(flow), self.B)


@dataclass(frozen=True)
class BitFlow:
    """Packed quantizer output: ``count`` values at ``bits`` bits each."""

    payload: bytes
    count: int
    bits: int

    @property
    def num_bits(self) -> int:
        return self.count * self.bits


def _check_bits(bits: int) -> int:
    if not isinstance(bits, (int, np.integer)) or not 1 <= int(bits) <= 8:
        raise ValueError(f"bit depth must be an integer in [1, 8], got {bits!r}")
    return int(bits)


def _round_half_away(z: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(z) + 0.5), z)


def quantize(x, bits: int) -> np.ndarray:
    """Map values in (-1, 1) to integer levels."""
    bits = _check_bits(bits)
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError("quantize: non-finite input")
    if np.any(np.abs(arr) >= 1.0):
        raise ValueError("quantize: inputs must lie strictly inside (-1, 1)")
    half = 2 ** (bits - 1)
    levels = _round_half_away(arr * half)
    np.clip(levels, -(half - 1), half - 1, out=levels)
    return levels.astype(np.int64)


def dequantize(levels, bits: int) -> np.ndarray:
    """Map integer levels back to their reconstruction values."""
    bits = _check_bits(bits)
    half = 2 ** (bits - 1)
    levels = np.asarray(levels, dtype=np.int64)
    if np.any(levels > half - 1) or np.any(levels < -(half - 1)):
        raise ValueError("dequantize: level out of range for bit depth")
    return levels / float(half)


def pack(levels, bits: int) -> BitFlow:
    """Pack levels as MSB-first two's-complement codes, zero-padded to bytes."""
    bits = _check_bits(bits)
    half = 2 ** (bits - 1)
    levels = np.asarray(levels, dtype=np.int64)
    if levels.ndim != 1:
        raise ValueError("pack: levels must be 1-D")
    if np.any(levels > half - 1) or np.any(levels < -(half - 1)):
        raise ValueError("pack: level out of range for bit depth")
    codes = (levels & (2 ** bits - 1)).astype(np.uint8)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint8)
    bitstream = ((codes[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    payload = np.packbits(bitstream).tobytes()
    return BitFlow(payload=payload, count=levels.size, bits=bits)


def unpack(flow: BitFlow) -> np.ndarray:
    """Recover integer levels, rejecting malformed payloads."""
    bits = _check_bits(flow.bits)
    if flow.count < 0:
        raise CorruptPayloadError("unpack: negative count")
    total = flow.count * bits
    expected_len = (total + 7) // 8
    if len(flow.payload) != expected_len:
        raise CorruptPayloadError(
            f"unpack: payload holds {len(flow.payload)} bytes, expected {expected_len}")
    raw = np.frombuffer(flow.payload, dtype=np.uint8)
    bitstream = np.unpackbits(raw)
    if np.any(bitstream[total:]):
        raise CorruptPayloadError("unpack: nonzero padding bits")
    weights = 1 << np.arange(bits - 1, -1, -1, dtype=np.int64)
    codes = bitstream[:total].reshape(flow.count, bits).astype(np.int64) @ weights
    half = 2 ** (bits - 1)
    levels = np.where(codes >= half, codes - 2 ** bits, codes)
    if np.any(levels == -half):
        raise CorruptPayloadError("unpack: forbidden all-negative code present")
    return levels


def saturate_open_unit(x: np.ndarray) -> np.ndarray:
    """Clamp float values onto the largest representable open (-1, 1) range.

    tanh outputs can round to exactly +/-1 in float64; the quantizer domain
    is the open interval, so codeword paths squeeze the endpoints in by one
    ulp before quantizing.
    """
    return np.clip(x, -_OPEN_UNIT, _OPEN_UNIT)


def quantize_ste(x: Tensor, bits: int) -> Tensor:
    """In-graph quantize-dequantize with a straight-through backward pass."""
    bits = _check_bits(bits)
    levels = quantize(saturate_open_unit(x.data), bits)
    out = dequantize(levels, bits)

    def backward(g):
        return (g,)

    return Tensor._from_op(out, (x,), backward, "quantize_ste")
