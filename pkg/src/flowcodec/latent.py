"""Invertible pixel/latent transform.

A space/time-to-channel rearrangement stands in for a learned video
autoencoder so that every bit of reconstruction error is attributable to
the codec itself: decode(encode(X)) reproduces X exactly after pixel
requantization. Full-scale systems use a learned 3D autoencoder with
4x8x8 downsampling to 16 channels; here the channel count is forced to
3*f_t*f_h*f_w by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_PIXEL_HALF_RANGE = 127.5


@dataclass(frozen=True)
class LatentConfig:
    """Spatio-temporal patchify factors."""

    f_t: int = 1
    f_h: int = 4
    f_w: int = 4

    def __post_init__(self):
        if min(self.f_t, self.f_h, self.f_w) < 1:
            raise ValueError("latent factors must be >= 1")

    @property
    def channels(self) -> int:
        return 3 * self.f_t * self.f_h * self.f_w

    def latent_dims(self, t: int, h: int, w: int) -> tuple[int, int, int]:
        if t % self.f_t or h % self.f_h or w % self.f_w:
            raise ValueError(
                f"video dims ({t},{h},{w}) not divisible by factors "
                f"({self.f_t},{self.f_h},{self.f_w})"
            )
        return t // self.f_t, h // self.f_h, w // self.f_w


def latent_encode(video: np.ndarray, cfg: LatentConfig) -> np.ndarray:
    """uint8 (T,H,W,3) -> float32 latent (T', C, H', W') in roughly [-1, 1]."""
    if video.ndim != 4 or video.shape[-1] != 3:
        raise ValueError("latent_encode expects (T,H,W,3)")
    t, h, w, _ = video.shape
    tp, hp, wp = cfg.latent_dims(t, h, w)
    x = video.astype(np.float32) / _PIXEL_HALF_RANGE - 1.0
    x = x.reshape(tp, cfg.f_t, hp, cfg.f_h, wp, cfg.f_w, 3)
    # channel packing order (f_t, rgb, f_h, f_w); latent_decode inverts it
    x = x.transpose(0, 1, 6, 3, 5, 2, 4)
    return np.ascontiguousarray(x.reshape(tp, cfg.channels, hp, wp))


def latent_decode(z: np.ndarray, cfg: LatentConfig) -> np.ndarray:
    """Latent (T', C, H', W') -> uint8 video; clamps then rounds half away from zero."""
    if z.ndim != 4:
        raise ValueError("latent_decode expects (T',C,H',W')")
    tp, c, hp, wp = z.shape
    if c != cfg.channels:
        raise ValueError(f"latent has {c} channels, config implies {cfg.channels}")
    x = z.reshape(tp, cfg.f_t, 3, cfg.f_h, cfg.f_w, hp, wp)
    x = x.transpose(0, 1, 5, 3, 6, 4, 2)
    x = x.reshape(tp * cfg.f_t, hp * cfg.f_h, wp * cfg.f_w, 3)
    x = np.clip(x.astype(np.float64), -1.0, 1.0)
    levels = (x + 1.0) * _PIXEL_HALF_RANGE
    return np.floor(levels + 0.5).astype(np.uint8)  # non-negative: +0.5/floor == half away
