"""Raw-video file format and deterministic synthetic fixtures.

RVID layout: magic "RVID" | u16 T | u16 H | u16 W | u8 channels (3) |
interleaved uint8 RGB frames. Little-endian, no compression; it exists
so the codec can be driven without any media dependencies.
"""

from __future__ import annotations

import struct

import numpy as np

from .rng import DetRng

RVID_MAGIC = b"RVID"

SYNTH_KINDS = ("moving-gradient", "bouncing-rect", "noise-texture")


class RvidError(Exception):
    code = "rvid-error"


class RvidBadMagicError(RvidError):
    code = "rvid-bad-magic"


class RvidTruncatedError(RvidError):
    code = "rvid-truncated"


class RvidUnsupportedError(RvidError):
    code = "rvid-unsupported"


def video_to_bytes(video: np.ndarray) -> bytes:
    if video.ndim != 4 or video.shape[-1] != 3 or video.dtype != np.uint8:
        raise ValueError("expected uint8 video of shape (T,H,W,3)")
    t, h, w, _ = video.shape
    if max(t, h, w) > 0xFFFF:
        raise ValueError("dimension exceeds the u16 header field")
    return RVID_MAGIC + struct.pack("<HHHB", t, h, w, 3) + video.tobytes()


def video_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 4 or data[:4] != RVID_MAGIC:
        if len(data) >= 4:
            raise RvidBadMagicError(f"bad magic {data[:4]!r}")
        raise RvidTruncatedError("shorter than magic")
    if len(data) < 11:
        raise RvidTruncatedError("incomplete header")
    t, h, w, channels = struct.unpack("<HHHB", data[4:11])
    if channels != 3:
        raise RvidUnsupportedError(f"{channels} channels unsupported (need 3)")
    expected = t * h * w * 3
    payload = data[11:]
    if len(payload) < expected:
        raise RvidTruncatedError(
            f"payload {len(payload)} bytes, header implies {expected}")
    if len(payload) > expected:
        raise RvidError(f"{len(payload) - expected} trailing bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(t, h, w, 3).copy()


def save_video(path, video: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(video_to_bytes(video))


def load_video(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return video_from_bytes(fh.read())


def synth_video(kind: str, t: int, h: int, w: int, seed: int = 0) -> np.ndarray:
    """Deterministic procedural clips for fixtures and benchmarks."""
    if min(t, h, w) < 1:
        raise ValueError("dimensions must be positive")
    if kind == "moving-gradient":
        return _moving_gradient(t, h, w, seed)
    if kind == "bouncing-rect":
        return _bouncing_rect(t, h, w, seed)
    if kind == "noise-texture":
        return _noise_texture(t, h, w, seed)
    raise ValueError(f"unknown fixture kind {kind!r} (choose from {SYNTH_KINDS})")


def _moving_gradient(t: int, h: int, w: int, seed: int) -> np.ndarray:
    """Smooth diagonal color waves translating a fixed amount per frame."""
    rng = DetRng(seed)
    u = rng.uniforms(6)
    wavelength = (0.6 + 0.8 * u[0]) * min(h, w)
    angle = 2.0 * np.pi * u[1]
    speed = 0.08 + 0.10 * u[2]  # phase fraction per frame: real motion
    phase0 = u[3:6] * 2.0 * np.pi
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    proj = (xx * np.cos(angle) + yy * np.sin(angle)) / wavelength
    frames = np.empty((t, h, w, 3), dtype=np.uint8)
    for k in range(t):
        for ch in range(3):
            vals = 127.5 + 120.0 * np.sin(
                2.0 * np.pi * (proj + k * speed) + phase0[ch] + ch)
            frames[k, :, :, ch] = np.clip(np.floor(vals + 0.5), 0, 255)
    return frames


def _bouncing_rect(t: int, h: int, w: int, seed: int) -> np.ndarray:
    """A solid rectangle reflecting off the borders of a static background."""
    rng = DetRng(seed)
    rh = max(1, h // 4)
    rw = max(1, w // 4)
    bg = int(rng.integers(40, 90, ())) if min(h, w) > 1 else 60
    color = rng.integers(150, 256, 3)
    y = int(rng.integers(0, max(h - rh, 0) + 1, ()))
    x = int(rng.integers(0, max(w - rw, 0) + 1, ()))
    vy = 1 if h > rh else 0
    vx = 1 if w > rw else 0
    frames = np.full((t, h, w, 3), bg, dtype=np.uint8)
    for k in range(t):
        frames[k, y:y + rh, x:x + rw] = color
        ny, nx = y + vy, x + vx
        if ny < 0 or ny + rh > h:
            vy = -vy
            ny = y + vy
        if nx < 0 or nx + rw > w:
            vx = -vx
            nx = x + vx
        y, x = ny, nx
    return frames


def _noise_texture(t: int, h: int, w: int, seed: int) -> np.ndarray:
    rng = DetRng(seed)
    return rng.integers(0, 256, (t, h, w, 3)).astype(np.uint8)
