"""Seeded pretraining of the toy diffusion backbone.

Full-scale systems assume both ends hold the same pretrained diffusion
model; nothing about it travels in the bitstream. The desk-scale analog
is a deterministic pretraining recipe: given (architecture, seed,
steps, token geometry), both the encoder and the decoder rebuild
bit-identical backbone weights by running the same seeded loop, so the
weights never need to be transmitted.

Pretraining is content-agnostic: latents are random (smoothed) noise,
conditioning frames are corrupted copies of the latents, and masks
report per-group corruption levels. The model therefore learns the
universal map "denoise toward whatever the conditioning says, weighted
by its confidence" rather than any particular video.
"""

from __future__ import annotations

import numpy as np

from .dit import DitModel, dit_forward
from .flow import flow_loss, forward_process, sample_timestep
from .optim import AdamW, cosine_value
from .rng import DetRng, stream_key
from .tensor import Tensor, backward

_CACHE: dict[tuple, DitModel] = {}


def _smooth(x: np.ndarray, radius: int) -> np.ndarray:
    """Cheap separable box blur over the spatial axes of (T,C,H,W)."""
    if radius <= 0:
        return x
    for axis in (2, 3):
        acc = x.copy()
        for shift in range(1, radius + 1):
            acc += np.roll(x, shift, axis=axis)
            acc += np.roll(x, -shift, axis=axis)
        x = acc / (2 * radius + 1)
    return x


def _synthetic_batch(rng: DetRng, shape: tuple[int, int, int, int],
                     mask_channels: int):
    """One (z0, y, M) pretraining sample.

    y = z0 + kappa * eta with a random corruption level; M holds, per
    channel group, an honest confidence value derived from the actual
    corruption so gating on it is learnable.
    """
    tp, ch, hp, wp = shape
    z0 = rng.normals(shape, dtype=np.float32)
    scale = 0.3 + 0.7 * rng.uniforms(1)[0]
    radius = int(rng.integers(0, 3, ()))
    z0 = (_smooth(z0, radius) * scale).astype(np.float32)
    kappa = float(0.5 * rng.uniforms(1)[0])
    eta = rng.normals(shape, dtype=np.float32)
    y = z0 + np.float32(kappa) * eta
    group = ch // mask_channels
    mask = np.empty((tp, mask_channels, hp, wp), dtype=np.float32)
    for g in range(mask_channels):
        lo = g * group
        hi = ch if g == mask_channels - 1 else (g + 1) * group
        corruption = np.abs(np.float32(kappa) * eta[:, lo:hi]).mean(axis=1)
        mask[:, g] = np.clip(1.0 - corruption, 0.0, 1.0)
    return z0, y, mask


def pretrain_dit(in_channels: int, out_channels: int, blocks: int, dim: int,
                 heads: int, ff_mult: int, seed: int, steps: int, lr: float,
                 geometry: tuple[int, int, int],
                 mask_channels: int) -> DitModel:
    """Train (or fetch from cache) the shared frozen backbone.

    geometry is the token grid (T', H', W') the codec will run at.
    The returned model is frozen; callers must clone before mutating.
    """
    key = (in_channels, out_channels, blocks, dim, heads, ff_mult,
           seed, steps, float(lr), tuple(geometry), mask_channels)
    cached = _CACHE.get(key)
    if cached is not None:
        return cached

    model = DitModel(in_channels, out_channels, blocks=blocks, dim=dim,
                     heads=heads, ff_mult=ff_mult, seed=seed)
    tp, hp, wp = geometry
    shape = (tp, out_channels, hp, wp)
    rng = DetRng(stream_key(seed, "backbone-pretrain"))
    opt = AdamW(model.params, lr)
    for step in range(steps):
        z0, y, mask = _synthetic_batch(rng, shape, mask_channels)
        t_draw = sample_timestep(rng)
        eps = rng.normals(shape, dtype=np.float32)
        z_t, v_star = forward_process(z0, eps, t_draw)
        c = np.concatenate([y.transpose(1, 0, 2, 3), mask.transpose(1, 0, 2, 3)], axis=0)
        v_hat = dit_forward(model, Tensor(z_t), t_draw, Tensor(np.ascontiguousarray(c)))
        loss = flow_loss(v_hat, Tensor(v_star))
        opt.zero_grad()
        backward(loss)
        opt.lr = cosine_value(step, steps, lr, lr * 0.01)
        opt.step()
    model.freeze()
    _CACHE[key] = model
    return model


def clear_cache() -> None:
    _CACHE.clear()
