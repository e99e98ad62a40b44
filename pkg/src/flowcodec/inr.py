"""Temporal coordinate network producing latent conditioning and masks.

g(f) maps a normalized time f in [0,1] to a predicted latent frame y_f
and a per-pixel confidence mask M_f in [0,1]. The network is a small
learned feature grid, linearly interpolated in time, followed by an
upsampling convolutional decoder. There are no keyframes anywhere: the
grid plus decoder weights are the only source of temporal guidance.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .rng import DetRng
from .tensor import Tensor

WeightFn = Callable[[str, Tensor], Tensor]


def _xavier(rng: DetRng, shape, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    std = float(np.sqrt(2.0 / (fan_in + fan_out)))
    return (rng.normals(shape) * std).astype(dtype)


class InrModel:
    """Feature grid + conv decoder with linear and sigmoid output heads."""

    def __init__(self, latent_channels: int, height: int, width: int,
                 grid_t: int = 4, grid_channels: int = 32, stages: int = 2,
                 mask_channels: int = 4, seed: int = 0, dtype=np.float32):
        if grid_t < 1 or grid_channels < 1 or stages < 0 or mask_channels < 1:
            raise ValueError("bad INR architecture parameters")
        h0, w0 = height >> stages, width >> stages
        if h0 << stages != height or w0 << stages != width or h0 < 1 or w0 < 1:
            raise ValueError(
                f"output {height}x{width} not reachable from {stages} 2x stages"
            )
        self.latent_channels = latent_channels
        self.height, self.width = height, width
        self.grid_t, self.grid_channels = grid_t, grid_channels
        self.stages, self.mask_channels = stages, mask_channels
        self.dtype = np.dtype(dtype)

        rng = DetRng(seed)
        cg = grid_channels
        self.params: dict[str, Tensor] = {}
        self.params["grid"] = T.param(
            (rng.normals((grid_t, cg, h0, w0)) * 0.2).astype(dtype), dtype=dtype)
        for k in range(stages):
            self.params[f"stage{k}.weight"] = T.param(
                _xavier(rng, (cg, cg, 3, 3), cg * 9, cg * 9, dtype), dtype=dtype)
            self.params[f"stage{k}.bias"] = T.param(np.zeros(cg), dtype=dtype)
        self.params["head_y.weight"] = T.param(
            _xavier(rng, (latent_channels, cg, 1, 1), cg, latent_channels, dtype), dtype=dtype)
        self.params["head_y.bias"] = T.param(np.zeros(latent_channels), dtype=dtype)
        self.params["head_M.weight"] = T.param(
            _xavier(rng, (mask_channels, cg, 1, 1), cg, mask_channels, dtype), dtype=dtype)
        self.params["head_M.bias"] = T.param(np.zeros(mask_channels), dtype=dtype)
        self.prune_masks: dict[str, np.ndarray] = {}

    def arch_descriptor(self) -> dict:
        """Hyperparameters the decoder needs to rebuild the network shape."""
        return {
            "latent_channels": self.latent_channels,
            "height": self.height,
            "width": self.width,
            "grid_t": self.grid_t,
            "grid_channels": self.grid_channels,
            "stages": self.stages,
            "mask_channels": self.mask_channels,
        }

    @classmethod
    def from_descriptor(cls, desc: dict, dtype=np.float32) -> "InrModel":
        return cls(desc["latent_channels"], desc["height"], desc["width"],
                   grid_t=desc["grid_t"], grid_channels=desc["grid_channels"],
                   stages=desc["stages"], mask_channels=desc["mask_channels"],
                   dtype=dtype)

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in state:
                raise KeyError(f"missing INR tensor {name!r}")
            arr = np.asarray(state[name], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch loading {name!r}")
            p.data = arr.copy()

    def freeze(self) -> None:
        for p in self.params.values():
            p.requires_grad = False

    def enforce_prune(self) -> None:
        """Re-zero masked positions; called after every optimizer step."""
        for name, mask in self.prune_masks.items():
            self.params[name].data *= mask

    def _weight(self, name: str, weight_fn: WeightFn | None) -> Tensor:
        p = self.params[name]
        return p if weight_fn is None else weight_fn(name, p)


def inr_forward(model: InrModel, f: float,
                weight_fn: WeightFn | None = None) -> tuple[Tensor, Tensor]:
    """Evaluate g at temporal coordinate f, returning (y_f, M_f)."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"temporal coordinate {f} outside [0, 1]")
    grid = model._weight("grid", weight_fn)
    if model.grid_t == 1:
        x = grid[0]
    else:
        pos = f * (model.grid_t - 1)
        i0 = min(int(np.floor(pos)), model.grid_t - 2)
        w1 = pos - i0
        # w1 == 0 at slice boundaries makes the interpolation exact there
        x = T.add(T.mul(grid[i0], 1.0 - w1), T.mul(grid[i0 + 1], w1))
    for k in range(model.stages):
        x = T.upsample_nearest2x(x)
        x = T.conv2d(x, model._weight(f"stage{k}.weight", weight_fn),
                     model._weight(f"stage{k}.bias", weight_fn), padding=1)
        x = T.gelu(x)
    y = T.conv2d(x, model._weight("head_y.weight", weight_fn),
                 model._weight("head_y.bias", weight_fn))
    m = T.sigmoid(T.conv2d(x, model._weight("head_M.weight", weight_fn),
                           model._weight("head_M.bias", weight_fn)))
    return y, m


def gop_coordinates(n_frames: int) -> list[float]:
    """Uniform coordinates f_k = k/(T'-1); a single frame sits at f=0."""
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if n_frames == 1:
        return [0.0]
    return [k / (n_frames - 1) for k in range(n_frames)]


def sample_gop_conditioning(model: InrModel, n_frames: int,
                            weight_fn: WeightFn | None = None) -> tuple[Tensor, Tensor]:
    """Stack per-frame (y, M) along a new temporal axis.

    Returns y of shape (C, T', H', W') and M of shape (C_m, T', H', W').
    """
    ys, ms = [], []
    for f in gop_coordinates(n_frames):
        y, m = inr_forward(model, f, weight_fn)
        ys.append(T.reshape(y, (y.shape[0], 1) + y.shape[1:]))
        ms.append(T.reshape(m, (m.shape[0], 1) + m.shape[1:]))
    return T.concat(ys, axis=1), T.concat(ms, axis=1)


def conditioning_concat(y: Tensor, m: Tensor) -> Tensor:
    """c = concat(y, M) on the channel axis, y channels first."""
    if y.shape[1:] != m.shape[1:]:
        raise ValueError(f"conditioning shapes disagree: {y.shape} vs {m.shape}")
    return T.concat([y, m], axis=0)


def cond_loss(y: Tensor, z0) -> Tensor:
    """Mean squared error between predicted and true latents.

    The mean (rather than a raw sum) keeps the loss-mixing weight
    scale-free across resolutions.
    """
    z0 = z0 if isinstance(z0, Tensor) else Tensor(np.asarray(z0, dtype=y.dtype))
    if y.shape != z0.shape:
        raise ValueError(f"cond_loss shape mismatch: {y.shape} vs {z0.shape}")
    return T.mse(y, z0)
