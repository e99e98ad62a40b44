"""AdamW, the cosine schedule, and a finite-difference gradient checker."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .tensor import Tensor, backward, zero_grads


class AdamW:
    """Decoupled-weight-decay Adam over a named parameter dict.

    The step counter k starts at 0; bias correction inside step() uses
    k+1. Weight decay multiplies parameters by exactly (1 - lr*wd)
    before the moment update is applied, so a zero-gradient step with
    fresh moments shrinks parameters by precisely that factor.
    """

    def __init__(self, params: dict[str, Tensor], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = dict(params)
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.k = 0
        self.m = {n: np.zeros_like(t.data) for n, t in self.params.items()}
        self.v = {n: np.zeros_like(t.data) for n, t in self.params.items()}

    def zero_grad(self) -> None:
        zero_grads(self.params)

    def step(self) -> None:
        t = self.k + 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is not None and g.shape != p.data.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            if self.weight_decay:
                p.data *= (1.0 - self.lr * self.weight_decay)
            if g is None:
                g = np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self.lr * update
        self.k = t


def cosine_value(step: int, total: int, v_max: float, v_min: float) -> float:
    """Half-cosine interpolation from v_max at step 0 to v_min at step total."""
    if total <= 0:
        raise ValueError("cosine_value requires total > 0")
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    return v_min + 0.5 * (v_max - v_min) * (1.0 + math.cos(math.pi * step / total))


def finite_diff_check(f: Callable[[], Tensor], params: dict[str, Tensor],
                      h: float = 1e-4) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    f must be a deterministic zero-argument closure over params returning
    a scalar Tensor. Error per element is |ad - fd| / max(1e-12, |fd|);
    returns the max over every element of every parameter.
    """
    if h <= 0:
        raise ValueError("finite_diff_check requires h > 0")
    zero_grads(params)
    grads = backward(f(), params)
    worst = 0.0
    for name, p in params.items():
        ad = grads[name]
        flat = p.data.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            fp = f().item()
            flat[idx] = orig - h
            fm = f().item()
            flat[idx] = orig
            fd = (fp - fm) / (2.0 * h)
            err = abs(float(ad.reshape(-1)[idx]) - fd) / max(1e-12, abs(fd))
            worst = max(worst, err)
    zero_grads(params)
    return worst
