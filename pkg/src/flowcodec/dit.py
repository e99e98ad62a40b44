"""Toy diffusion transformer over spatio-temporal latent tokens.

Each latent position (t', h', w') becomes one token whose features are
the channel-concatenation of the noisy latent and the conditioning
signal; a sinusoidal timestep embedding is added to every token. There
is deliberately no positional embedding and no cross-attention: all
spatial identity must come through the conditioning channels, which is
what makes the conditioning signal load-bearing.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .rng import DetRng
from .tensor import Tensor

_TIME_SCALE = 1000.0


class DitModel:
    """Pre-LN transformer blocks with a zero-initialized output head."""

    def __init__(self, in_channels: int, out_channels: int, blocks: int = 2,
                 dim: int = 64, heads: int = 4, ff_mult: int = 4,
                 seed: int = 0, dtype=np.float32):
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        if dim % 2:
            raise ValueError("dim must be even for the timestep embedding")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.blocks, self.dim, self.heads, self.ff_mult = blocks, dim, heads, ff_mult
        self.dtype = np.dtype(dtype)

        rng = DetRng(seed)
        ff = dim * ff_mult
        p: dict[str, Tensor] = {}

        def xavier(shape, fan_in, fan_out):
            std = math.sqrt(2.0 / (fan_in + fan_out))
            return T.param((rng.normals(shape) * std).astype(dtype), dtype=dtype)

        p["inproj.weight"] = xavier((in_channels, dim), in_channels, dim)
        p["inproj.bias"] = T.param(np.zeros(dim), dtype=dtype)
        for i in range(blocks):
            p[f"block{i}.ln1.gamma"] = T.param(np.ones(dim), dtype=dtype)
            p[f"block{i}.ln1.beta"] = T.param(np.zeros(dim), dtype=dtype)
            p[f"block{i}.attn.qkv.weight"] = xavier((dim, 3 * dim), dim, 3 * dim)
            p[f"block{i}.attn.qkv.bias"] = T.param(np.zeros(3 * dim), dtype=dtype)
            p[f"block{i}.attn.out.weight"] = xavier((dim, dim), dim, dim)
            p[f"block{i}.attn.out.bias"] = T.param(np.zeros(dim), dtype=dtype)
            p[f"block{i}.ln2.gamma"] = T.param(np.ones(dim), dtype=dtype)
            p[f"block{i}.ln2.beta"] = T.param(np.zeros(dim), dtype=dtype)
            p[f"block{i}.ff.w1.weight"] = xavier((dim, ff), dim, ff)
            p[f"block{i}.ff.w1.bias"] = T.param(np.zeros(ff), dtype=dtype)
            p[f"block{i}.ff.w2.weight"] = xavier((ff, dim), ff, dim)
            p[f"block{i}.ff.w2.bias"] = T.param(np.zeros(dim), dtype=dtype)
        p["final_ln.gamma"] = T.param(np.ones(dim), dtype=dtype)
        p["final_ln.beta"] = T.param(np.zeros(dim), dtype=dtype)
        # zero head: initial velocity prediction is exactly 0
        p["head.weight"] = T.param(np.zeros((dim, out_channels)), dtype=dtype)
        p["head.bias"] = T.param(np.zeros(out_channels), dtype=dtype)
        self.params = p

    def freeze(self) -> None:
        for p in self.params.values():
            p.requires_grad = False

    def clone(self) -> "DitModel":
        dup = object.__new__(DitModel)
        dup.in_channels, dup.out_channels = self.in_channels, self.out_channels
        dup.blocks, dup.dim = self.blocks, self.dim
        dup.heads, dup.ff_mult = self.heads, self.ff_mult
        dup.dtype = self.dtype
        dup.params = {
            n: Tensor(p.data.copy(), requires_grad=p.requires_grad)
            for n, p in self.params.items()
        }
        return dup

    def checksum(self) -> int:
        """Order-sensitive hash of all weight bytes (frozen-backbone audits)."""
        import zlib
        crc = 0
        for name in self.params:
            crc = zlib.crc32(self.params[name].data.tobytes(), crc)
        return crc

    def weight(self, name: str) -> Tensor:
        return self.params[name]


def adapter_targets(blocks: int) -> list[str]:
    """Mappings the adapters attach to: attention output projection and
    both feed-forward matrices per block, plus the final output head."""
    names = []
    for i in range(blocks):
        names.append(f"block{i}.attn.out.weight")
        names.append(f"block{i}.ff.w1.weight")
        names.append(f"block{i}.ff.w2.weight")
    names.append("head.weight")
    return names


def timestep_embedding(t: float, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal embedding of a scalar diffusion time in [0, 1]."""
    half = dim // 2
    exponents = np.arange(half, dtype=np.float64) / max(half - 1, 1)
    freqs = np.exp(-math.log(10000.0) * exponents)
    angles = _TIME_SCALE * float(t) * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)]).astype(dtype)


def _attention(x: Tensor, model, prefix: str, weight) -> Tensor:
    n, d = x.shape
    heads = model.heads
    dh = d // heads
    qkv = T.add(T.matmul(x, weight(f"{prefix}.qkv.weight")),
                weight(f"{prefix}.qkv.bias"))
    q = T.transpose(T.reshape(qkv[:, 0:d], (n, heads, dh)), (1, 0, 2))
    k = T.transpose(T.reshape(qkv[:, d:2 * d], (n, heads, dh)), (1, 0, 2))
    v = T.transpose(T.reshape(qkv[:, 2 * d:3 * d], (n, heads, dh)), (1, 0, 2))
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(dh))
    attn = T.softmax(scores, axis=-1)
    ctx = T.reshape(T.transpose(T.matmul(attn, v), (1, 0, 2)), (n, d))
    return T.add(T.matmul(ctx, weight(f"{prefix}.out.weight")),
                 weight(f"{prefix}.out.bias"))


def dit_forward(model, z_t, t: float, c) -> Tensor:
    """Predict the velocity field for noisy latents z_t at time t given
    conditioning c.

    model may be a DitModel or an adapted view exposing .weight(name);
    z_t has shape (T',C,H',W'), c has shape (C+C_m,T',H',W'). The output
    matches z_t's shape.
    """
    base = getattr(model, "base", model)
    z_t = z_t if isinstance(z_t, Tensor) else Tensor(np.asarray(z_t, dtype=base.dtype))
    c = c if isinstance(c, Tensor) else Tensor(np.asarray(c, dtype=base.dtype))
    tp, ch, hp, wp = z_t.shape
    if ch != base.out_channels:
        raise ValueError(f"latent has {ch} channels, model expects {base.out_channels}")
    if c.shape[1:] != (tp, hp, wp):
        raise ValueError(f"conditioning grid {c.shape[1:]} does not match latent ({tp},{hp},{wp})")
    if ch + c.shape[0] != base.in_channels:
        raise ValueError(
            f"channel mismatch: {ch}+{c.shape[0]} vs input projection {base.in_channels}")

    n = tp * hp * wp
    zt_tok = T.reshape(T.transpose(z_t, (0, 2, 3, 1)), (n, ch))
    c_tok = T.reshape(T.transpose(c, (1, 2, 3, 0)), (n, c.shape[0]))
    x = T.concat([zt_tok, c_tok], axis=1)

    weight = model.weight
    x = T.add(T.matmul(x, weight("inproj.weight")), weight("inproj.bias"))
    x = T.add(x, Tensor(timestep_embedding(t, base.dim, base.dtype)))
    for i in range(base.blocks):
        h = T.layer_norm(x, weight(f"block{i}.ln1.gamma"), weight(f"block{i}.ln1.beta"))
        x = T.add(x, _attention(h, base, f"block{i}.attn", weight))
        h = T.layer_norm(x, weight(f"block{i}.ln2.gamma"), weight(f"block{i}.ln2.beta"))
        h = T.gelu(T.add(T.matmul(h, weight(f"block{i}.ff.w1.weight")),
                         weight(f"block{i}.ff.w1.bias")))
        h = T.add(T.matmul(h, weight(f"block{i}.ff.w2.weight")),
                  weight(f"block{i}.ff.w2.bias"))
        x = T.add(x, h)
    x = T.layer_norm(x, weight("final_ln.gamma"), weight("final_ln.beta"))
    v = T.add(T.matmul(x, weight("head.weight")), weight("head.bias"))
    v = T.transpose(T.reshape(v, (tp, hp, wp, ch)), (0, 3, 1, 2))
    return v
