"""Distortion metrics on uint8 RGB video: PSNR and multi-scale SSIM."""

from __future__ import annotations

import math

import numpy as np

_DATA_RANGE = 255.0
_K1, _K2 = 0.01, 0.03
_WINDOW = 11
_SIGMA = 1.5
# canonical five-scale weights; renormalized when fewer scales fit
_MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.dtype != np.uint8 or b.dtype != np.uint8:
        raise ValueError("metrics expect uint8 video")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(255^2 / MSE) over all pixels and channels; inf when equal."""
    _check_pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(_DATA_RANGE ** 2 / mse)


def _gaussian_kernel(size: int = _WINDOW, sigma: float = _SIGMA) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering of a 2-D image."""
    k = kernel.size
    win = np.lib.stride_tricks.sliding_window_view(img, k, axis=0)
    img = win @ kernel
    win = np.lib.stride_tricks.sliding_window_view(img, k, axis=1)
    return win @ kernel


def _ssim_components(a: np.ndarray, b: np.ndarray,
                     kernel: np.ndarray) -> tuple[float, float]:
    """Mean SSIM and mean contrast-structure over one plane."""
    c1 = (_K1 * _DATA_RANGE) ** 2
    c2 = (_K2 * _DATA_RANGE) ** 2
    mu_a = _filter_valid(a, kernel)
    mu_b = _filter_valid(b, kernel)
    var_a = _filter_valid(a * a, kernel) - mu_a * mu_a
    var_b = _filter_valid(b * b, kernel) - mu_b * mu_b
    cov = _filter_valid(a * b, kernel) - mu_a * mu_b
    cs_map = (2.0 * cov + c2) / (var_a + var_b + c2)
    lum_map = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    return float(np.mean(lum_map * cs_map)), float(np.mean(cs_map))


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: 2 * (h // 2), : 2 * (w // 2)]
    return img.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def msssim_scales(height: int, width: int) -> int:
    """Scales that keep every level at least one filter window wide."""
    side = min(height, width)
    if side < _WINDOW:
        raise ValueError(f"frames must be at least {_WINDOW} pixels on a side")
    return min(len(_MSSSIM_WEIGHTS), int(math.floor(math.log2(side / _WINDOW))) + 1)


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Multi-scale SSIM averaged over frames and channels.

    Uses the canonical five-scale weights when the frames allow five
    halvings; smaller frames drop the coarsest scales and renormalize
    the remaining weights. Negative component means are clamped to zero
    before the weighted geometric mean.
    """
    _check_pair(a, b)
    if a.ndim != 4:
        raise ValueError("ms_ssim expects (T,H,W,3) video")
    n_scales = msssim_scales(a.shape[1], a.shape[2])
    weights = np.asarray(_MSSSIM_WEIGHTS[:n_scales])
    weights = weights / weights.sum()
    kernel = _gaussian_kernel()

    values = []
    for frame in range(a.shape[0]):
        for ch in range(a.shape[3]):
            pa = a[frame, :, :, ch].astype(np.float64)
            pb = b[frame, :, :, ch].astype(np.float64)
            parts = []
            for scale in range(n_scales):
                ssim_mean, cs_mean = _ssim_components(pa, pb, kernel)
                parts.append(ssim_mean if scale == n_scales - 1 else cs_mean)
                if scale != n_scales - 1:
                    pa = _downsample2(pa)
                    pb = _downsample2(pb)
            parts = np.maximum(np.asarray(parts), 0.0)
            values.append(float(np.prod(parts ** weights)))
    return float(np.mean(values))
