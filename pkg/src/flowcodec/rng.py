"""Deterministic, platform-independent random streams.

Every stochastic draw in the codec (basis generation, Gaussian noise,
timestep sampling, quantization-noise masks, synthetic fixtures) goes
through the xoshiro256++ generator implemented here instead of numpy's
generators, so that encoded bitstreams and decoded videos are
bit-identical across platforms, Python builds, and numpy versions.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_SM_GAMMA = 0x9E3779B97F4A7C15
_U53_INV = 2.0**-53


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of a UTF-8 string."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


class SplitMix64:
    """The standard splitmix64 sequence, used to key and seed streams."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next(self) -> int:
        self._state = (self._state + _SM_GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def stream_key(seed: int, tag: str) -> int:
    """Derive a substream key: one splitmix64 output of seed XOR hash64(tag)."""
    return SplitMix64((seed & _MASK64) ^ fnv1a64(tag)).next()


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256pp:
    """xoshiro256++ with state seeded from splitmix64, per the reference scheme."""

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        self._s = [sm.next(), sm.next(), sm.next(), sm.next()]

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def raw(self, n: int) -> np.ndarray:
        """n sequential outputs as a uint64 array."""
        nxt = self.next_u64
        return np.fromiter((nxt() for _ in range(n)), dtype=np.uint64, count=n)


class DetRng:
    """Convenience wrapper exposing float/bool draws over one xoshiro stream."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._gen = Xoshiro256pp(self.seed)

    def substream(self, tag: str) -> "DetRng":
        return DetRng(stream_key(self.seed, tag))

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles in (0, 1], from the top 53 bits of each output."""
        bits = self._gen.raw(n) >> np.uint64(11)
        return (bits.astype(np.float64) + 1.0) * _U53_INV

    def uniforms_half_open(self, n: int) -> np.ndarray:
        """n doubles in [0, 1)."""
        bits = self._gen.raw(n) >> np.uint64(11)
        return bits.astype(np.float64) * _U53_INV

    def normals(self, shape, dtype=np.float64) -> np.ndarray:
        """Standard normals via Box-Muller.

        Consecutive outputs come in (cos, sin) pairs, each pair consuming
        two uniforms, so the draw order is fully pinned by the element
        count; callers relying on reproducible streams must keep their
        request sizes stable.
        """
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if n == 0:
            return np.zeros(shape, dtype=dtype)
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = (2.0 * math.pi) * u[1::2]
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n].reshape(shape).astype(dtype)

    def normal(self) -> float:
        return float(self.normals(1)[0])

    def bernoulli(self, p: float, shape) -> np.ndarray:
        """Boolean array with independent P(True) = p entries."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if n == 0:
            return np.zeros(shape, dtype=bool)
        return (self.uniforms(n) <= p).reshape(shape)

    def integers(self, low: int, high: int, shape) -> np.ndarray:
        """Integers in [low, high), scaled from [0,1) uniforms."""
        if high <= low:
            raise ValueError("integers needs high > low")
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = self.uniforms_half_open(n)
        return (low + np.floor(u * (high - low)).astype(np.int64)).reshape(shape)
