"""Adaptive order-0 range coder (carry-less, 32-bit, byte renormalization).

The probability model starts with every frequency at 1, increments the
coded symbol's count after each step, and halves all counts (floor,
minimum 1) once the total exceeds 2^16. Encoder and decoder evolve the
model identically, so no table is transmitted. The coder itself is the
classic carry-less design: emit the top byte whenever it can no longer
change, and force-align the range when it drops below 2^16.
"""

from __future__ import annotations

import numpy as np

_TOP = 1 << 24
_BOT = 1 << 16
_MASK32 = 0xFFFFFFFF
_TOTAL_LIMIT = 1 << 16

ALPHABET = 64


class RangeCoderError(ValueError):
    """Corrupt or truncated entropy-coded payload."""


class _AdaptiveModel:
    __slots__ = ("n", "freq", "cum", "total")

    def __init__(self, alphabet: int):
        self.n = alphabet
        self.freq = [1] * alphabet
        self.cum = list(range(alphabet + 1))
        self.total = alphabet

    def update(self, sym: int) -> None:
        self.freq[sym] += 1
        cum = self.cum
        for i in range(sym + 1, self.n + 1):
            cum[i] += 1
        self.total += 1
        if self.total > _TOTAL_LIMIT:
            self._halve()

    def _halve(self) -> None:
        freq = self.freq
        total = 0
        cum = self.cum
        for i in range(self.n):
            cum[i] = total
            freq[i] = max(1, freq[i] >> 1)
            total += freq[i]
        cum[self.n] = total
        self.total = total

    def find(self, value: int) -> int:
        """Largest symbol s with cum[s] <= value (binary search)."""
        lo, hi = 0, self.n
        cum = self.cum
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cum[mid] <= value:
                lo = mid
            else:
                hi = mid
        return lo


class _Encoder:
    def __init__(self):
        self.low = 0
        self.rng = _MASK32
        self.out = bytearray()

    def encode(self, cum_low: int, freq: int, total: int) -> None:
        r = self.rng // total
        self.low = (self.low + r * cum_low) & _MASK32
        self.rng = r * freq
        self._normalize()

    def _normalize(self) -> None:
        low, rng, out = self.low, self.rng, self.out
        while True:
            if (low ^ ((low + rng) & _MASK32)) < _TOP:
                pass
            elif rng < _BOT:
                rng = (-low) & (_BOT - 1)
            else:
                break
            out.append((low >> 24) & 0xFF)
            low = (low << 8) & _MASK32
            rng = (rng << 8) & _MASK32
        self.low, self.rng = low, rng

    def finish(self) -> bytes:
        for _ in range(4):
            self.out.append((self.low >> 24) & 0xFF)
            self.low = (self.low << 8) & _MASK32
        return bytes(self.out)


class _Decoder:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.pos = 0
        self.low = 0
        self.rng = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = ((self.code << 8) | self._read_byte()) & _MASK32

    def _read_byte(self) -> int:
        if self.pos >= len(self.payload):
            raise RangeCoderError("truncated entropy payload")
        b = self.payload[self.pos]
        self.pos += 1
        return b

    def decode_value(self, total: int) -> int:
        self._r = self.rng // total
        value = ((self.code - self.low) & _MASK32) // self._r
        if value >= total:
            raise RangeCoderError("corrupt entropy payload")
        return value

    def consume(self, cum_low: int, freq: int) -> None:
        self.low = (self.low + self._r * cum_low) & _MASK32
        self.rng = self._r * freq
        low, rng = self.low, self.rng
        code = self.code
        while True:
            if (low ^ ((low + rng) & _MASK32)) < _TOP:
                pass
            elif rng < _BOT:
                rng = (-low) & (_BOT - 1)
            else:
                break
            code = ((code << 8) | self._read_byte()) & _MASK32
            low = (low << 8) & _MASK32
            rng = (rng << 8) & _MASK32
        self.low, self.rng, self.code = low, rng, code


def range_encode(symbols, alphabet: int = ALPHABET) -> bytes:
    """Entropy-code a sequence of symbols in [0, alphabet)."""
    model = _AdaptiveModel(alphabet)
    enc = _Encoder()
    for sym in np.asarray(symbols, dtype=np.int64).reshape(-1).tolist():
        if not 0 <= sym < alphabet:
            raise ValueError(f"symbol {sym} outside alphabet [0, {alphabet})")
        enc.encode(model.cum[sym], model.freq[sym], model.total)
        model.update(sym)
    return enc.finish()


def range_decode(payload: bytes, count: int, alphabet: int = ALPHABET) -> np.ndarray:
    """Recover exactly count symbols; raises RangeCoderError on corruption."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        if len(payload) < 4:
            raise RangeCoderError("truncated entropy payload")
        return np.zeros(0, dtype=np.uint8)
    model = _AdaptiveModel(alphabet)
    dec = _Decoder(payload)
    out = np.empty(count, dtype=np.uint8)
    for i in range(count):
        value = dec.decode_value(model.total)
        sym = model.find(value)
        dec.consume(model.cum[sym], model.freq[sym])
        model.update(sym)
        out[i] = sym
    return out
