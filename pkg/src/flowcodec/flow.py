"""Flow-matching forward process, loss, and the Euler sampler.

Training mixes clean latents with Gaussian noise along a straight line,
z_t = (1-t) z0 + t eps, and regresses the model onto the constant path
velocity eps - z0. Decoding integrates the learned field from t=1
(pure noise) down to t=0 on a uniform grid.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .dit import dit_forward
from .rng import DetRng
from .tensor import Tensor


def sample_timestep(rng: DetRng) -> float:
    """Draw t in (0,1) as sigmoid(u), u ~ Normal(0,1) (logit-normal)."""
    u = rng.normal()
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def forward_process(z0: np.ndarray, eps: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (z_t, v*) = ((1-t) z0 + t eps, eps - z0)."""
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ValueError(f"shape mismatch: {z0.shape} vs {eps.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"timestep {t} outside [0, 1]")
    t = z0.dtype.type(t)
    return (1 - t) * z0 + t * eps, eps - z0


def flow_loss(v_hat: Tensor, v_star) -> Tensor:
    """Mean squared error between predicted and target velocities."""
    v_star = v_star if isinstance(v_star, Tensor) else Tensor(
        np.asarray(v_star, dtype=v_hat.dtype))
    if v_hat.shape != v_star.shape:
        raise ValueError(f"flow_loss shape mismatch: {v_hat.shape} vs {v_star.shape}")
    return T.mse(v_hat, v_star)


def euler_sample(model, c, steps: int, seed: int,
                 init_noise: np.ndarray | None = None) -> np.ndarray:
    """Integrate the velocity field from z1 ~ N(0,I) down to t=0.

    The state is held in float64 between steps (the model still sees its
    own working precision) so the integration itself adds no drift; the
    result is a pure function of (model, c, steps, seed).
    """
    if steps < 1:
        raise ValueError("euler_sample requires steps >= 1")
    base = getattr(model, "base", model)
    c_arr = c.data if isinstance(c, Tensor) else np.asarray(c, dtype=base.dtype)
    tp, hp, wp = c_arr.shape[1], c_arr.shape[2], c_arr.shape[3]
    shape = (tp, base.out_channels, hp, wp)
    if init_noise is not None:
        if init_noise.shape != shape:
            raise ValueError("init_noise shape mismatch")
        z = init_noise.astype(np.float64)
    else:
        z = DetRng(seed).normals(shape, dtype=base.dtype).astype(np.float64)
    c_const = Tensor(c_arr)
    h = 1.0 / steps
    for k in range(steps, 0, -1):
        v = dit_forward(model, Tensor(z.astype(base.dtype)), k / steps, c_const)
        z = z - h * v.data.astype(np.float64)
    return z.astype(base.dtype)
