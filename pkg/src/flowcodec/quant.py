"""Affine 6-bit quantization and quantization-noise training.

Symbols are unsigned with a per-tensor float32 scale and an integer
zero point, chosen so that an exact 0.0 always survives the round trip
(pruned zeros need no side-channel mask). All rounding is
half-away-from-zero; internal arithmetic runs in float64 but always
starts from the float32 scale that the bitstream actually stores, so
encoder-side and decoder-side dequantization agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import DetRng
from .tensor import Tensor, replace_values

SCALE_FLOOR = 1e-8


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest with ties away from zero (numpy rounds ties to even)."""
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _levels(bits: int) -> int:
    if not 2 <= bits <= 8:
        raise ValueError("quantization bits must be in [2, 8]")
    return (1 << bits) - 1


def quant_params(t: np.ndarray, bits: int = 6) -> tuple[float, int]:
    """Asymmetric affine parameters over the zero-anchored value range.

    The range is [min(t, 0), max(t, 0)]: extending it to include 0 keeps
    the zero point inside the symbol alphabet without clamping, so exact
    zeros always survive and offset tensors (e.g. all-positive) keep
    their values. The zero point comes from the exact (float64) scale so
    that e.g. a [-1, 1] range lands on round(31.5) = 32; the returned
    scale is the float32 value the bitstream stores, and
    quantize/dequantize must use it for encoder/decoder agreement. An
    all-zero (or empty) tensor falls back to the scale floor.
    """
    qmax = _levels(bits)
    arr = np.asarray(t, dtype=np.float64)
    if arr.size == 0:
        return float(np.float32(SCALE_FLOOR)), 0
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot quantize non-finite values")
    lo = min(float(arr.min()), 0.0)
    hi = max(float(arr.max()), 0.0)
    scale64 = max((hi - lo) / qmax, SCALE_FLOOR)
    zp = int(round_half_away(-lo / scale64))
    return float(np.float32(scale64)), int(np.clip(zp, 0, qmax))


def quantize(t: np.ndarray, scale: float, zero_point: int, bits: int = 6) -> np.ndarray:
    """x -> clamp(round(x/scale) + zp, 0, 2^bits - 1) as uint8 symbols."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    qmax = _levels(bits)
    arr = np.asarray(t, dtype=np.float64)
    q = round_half_away(arr / np.float64(np.float32(scale))) + zero_point
    return np.clip(q, 0, qmax).astype(np.uint8)


def dequantize(symbols: np.ndarray, scale: float, zero_point: int,
               dtype=np.float32) -> np.ndarray:
    """Symbols -> scale * (q - zero_point)."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    q = np.asarray(symbols, dtype=np.float64)
    return (np.float64(np.float32(scale)) * (q - zero_point)).astype(dtype)


def fake_quantize(t: np.ndarray, bits: int = 6) -> np.ndarray:
    """One quantize/dequantize round trip at the tensor's own parameters."""
    arr = np.asarray(t)
    scale, zp = quant_params(arr, bits)
    return dequantize(quantize(arr, scale, zp, bits), scale, zp, dtype=arr.dtype)


def quant_noise_forward(t: Tensor, rng: DetRng, rho: float, bits: int = 6) -> Tensor:
    """Replace a Bernoulli(rho) fraction of entries with their quantized
    values; the gradient passes through the replacement unchanged."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho {rho} outside [0, 1]")
    data = t.data
    if rho == 0.0 or data.size == 0:
        return t
    quantized = fake_quantize(data, bits)
    if rho == 1.0:
        mixed = quantized
    else:
        mask = rng.bernoulli(rho, data.shape)
        mixed = np.where(mask, quantized, data)
    return replace_values(t, mixed)


@dataclass
class QuantizedTensor:
    """A tensor as it travels in the bitstream."""

    tensor_id: str
    shape: tuple[int, ...]
    symbols: np.ndarray  # flat uint8
    scale: float
    zero_point: int

    def __post_init__(self):
        self.shape = tuple(int(d) for d in self.shape)
        self.symbols = np.asarray(self.symbols, dtype=np.uint8).reshape(-1)
        expected = int(np.prod(self.shape)) if self.shape else 1
        if self.symbols.size != expected:
            raise ValueError(
                f"{self.tensor_id!r}: {self.symbols.size} symbols for shape {self.shape}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @classmethod
    def from_array(cls, tensor_id: str, arr: np.ndarray, bits: int = 6) -> "QuantizedTensor":
        arr = np.asarray(arr)
        scale, zp = quant_params(arr, bits)
        return cls(tensor_id, arr.shape, quantize(arr, scale, zp, bits).reshape(-1),
                   scale, zp)

    def to_array(self, dtype=np.float32) -> np.ndarray:
        return dequantize(self.symbols, self.scale, self.zero_point,
                          dtype).reshape(self.shape)

    def __eq__(self, other) -> bool:
        return (isinstance(other, QuantizedTensor)
                and self.tensor_id == other.tensor_id
                and self.shape == other.shape
                and np.float32(self.scale) == np.float32(other.scale)
                and self.zero_point == other.zero_point
                and np.array_equal(self.symbols, other.symbols))
