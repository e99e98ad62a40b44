"""The DIVB bitstream container.

Layout (all multi-byte integers little-endian):

    magic "DIVB" | version u8 | header-json length u32 | header json |
    tensor count u32 | records... | crc32 u32

Each tensor record:

    id length u16 | id utf-8 | rank u32 | dims u32 * rank |
    scale f32 | zero_point u8 | payload length u32 | range-coded payload

The header is canonical JSON (sorted keys, no whitespace), so identical
model state always produces identical bytes. The trailing CRC-32 covers
everything before it; any single-byte corruption fails loudly.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .quant import QuantizedTensor
from .rangecoder import RangeCoderError, range_decode, range_encode

MAGIC = b"DIVB"
VERSION = 1


class BitstreamError(Exception):
    """Base class; .code is a stable machine-readable identifier."""

    code = "bitstream-error"


class BadMagicError(BitstreamError):
    code = "bad-magic"


class UnsupportedVersionError(BitstreamError):
    code = "bad-version"


class ChecksumError(BitstreamError):
    code = "bad-checksum"


class TruncatedError(BitstreamError):
    code = "truncated"


class HeaderError(BitstreamError):
    code = "bad-header"


def _canonical_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_bitstream(tensors: list[QuantizedTensor], header: dict) -> bytes:
    """Serialize quantized tensors plus header into one DIVB segment."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<B", VERSION)
    hdr = _canonical_header(header)
    out += struct.pack("<I", len(hdr))
    out += hdr
    out += struct.pack("<I", len(tensors))
    for qt in tensors:
        tid = qt.tensor_id.encode("utf-8")
        if len(tid) > 0xFFFF:
            raise ValueError(f"tensor id too long: {qt.tensor_id!r}")
        out += struct.pack("<H", len(tid))
        out += tid
        out += struct.pack("<I", len(qt.shape))
        for dim in qt.shape:
            out += struct.pack("<I", dim)
        out += struct.pack("<f", np.float32(qt.scale))
        out += struct.pack("<B", qt.zero_point)
        payload = range_encode(qt.symbols)
        out += struct.pack("<I", len(payload))
        out += payload
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"needed {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f32(self) -> float:
        return float(struct.unpack("<f", self.take(4))[0])


def read_bitstream(data: bytes) -> tuple[dict, list[QuantizedTensor]]:
    """Parse one DIVB segment; exact inverse of write_bitstream.

    Verifies magic, version, and checksum before parsing the body;
    each failure mode raises a distinct BitstreamError subclass.
    """
    if len(data) < len(MAGIC):
        raise TruncatedError("shorter than magic")
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic {data[:len(MAGIC)]!r}")
    if len(data) < len(MAGIC) + 1:
        raise TruncatedError("missing version byte")
    version = data[len(MAGIC)]
    if version != VERSION:
        raise UnsupportedVersionError(f"version {version}, supported {VERSION}")
    if len(data) < len(MAGIC) + 1 + 4:
        raise TruncatedError("missing checksum")
    body, tail = data[:-4], data[-4:]
    expect = struct.unpack("<I", tail)[0]
    actual = zlib.crc32(body) & 0xFFFFFFFF
    if expect != actual:
        raise ChecksumError(f"crc {actual:08x} != stored {expect:08x}")

    r = _Reader(body)
    r.take(len(MAGIC) + 1)
    hdr_len = r.u32()
    try:
        header = json.loads(r.take(hdr_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"unparseable header: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderError("header is not an object")
    count = r.u32()
    tensors: list[QuantizedTensor] = []
    for _ in range(count):
        tid = r.take(r.u16()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        scale = r.f32()
        zp = r.u8()
        payload = r.take(r.u32())
        n_symbols = int(np.prod(shape, dtype=np.int64)) if rank else 1
        try:
            symbols = range_decode(payload, n_symbols)
        except RangeCoderError as exc:
            raise TruncatedError(f"tensor {tid!r}: {exc}") from exc
        tensors.append(QuantizedTensor(tid, shape, symbols, scale, zp))
    if r.pos != len(body):
        raise TruncatedError(f"{len(body) - r.pos} trailing bytes after records")
    return header, tensors


def record_sizes(data: bytes) -> dict[str, int]:
    """Total serialized bytes per tensor id (record header included)."""
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError("bad magic")
    r = _Reader(data[:-4])
    r.take(len(MAGIC) + 1)
    r.take(r.u32())
    count = r.u32()
    sizes: dict[str, int] = {}
    for _ in range(count):
        start = r.pos
        tid = r.take(r.u16()).decode("utf-8")
        rank = r.u32()
        for _ in range(rank):
            r.u32()
        r.f32()
        r.u8()
        r.take(r.u32())
        sizes[tid] = r.pos - start
    return sizes


def measure_bpp(stream: bytes | int, t: int, h: int, w: int) -> float:
    """8 * stream bytes / (T*H*W)."""
    if t <= 0 or h <= 0 or w <= 0:
        raise ValueError("pixel dimensions must be positive")
    nbytes = stream if isinstance(stream, int) else len(stream)
    return 8.0 * nbytes / (t * h * w)
