"""Adaptive magnitude pruning for the conditioning network.

Scores are |theta| / sqrt(P) with P the owning tensor's parameter count,
which protects narrow layers when a single global threshold is applied.
Masked positions are zeroed immediately and re-zeroed after every
optimizer step for the rest of training.
"""

from __future__ import annotations

import math

import numpy as np

from .inr import InrModel


def prune_scores(layers: list[np.ndarray]) -> list[np.ndarray]:
    """Per-weight scores |theta|/sqrt(P) for each layer."""
    out = []
    for layer in layers:
        arr = np.asarray(layer)
        if arr.size == 0:
            raise ValueError("cannot score an empty layer")
        out.append(np.abs(arr) / math.sqrt(arr.size))
    return out


def apply_prune(model: InrModel, ratio: float) -> dict[str, np.ndarray]:
    """Mask the floor(ratio*N) globally lowest-scoring weights.

    Applies to every conditioning-network tensor (grid and heads
    included); adapter coefficients are never pruned. Ties break by
    (layer index, flat index) ascending. Masks are stored on the model
    and enforced through model.enforce_prune().
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"prune ratio {ratio} outside [0, 1)")
    names = list(model.params)
    layers = [model.params[n].data for n in names]
    scores = prune_scores(layers)

    flat_scores = np.concatenate([s.reshape(-1) for s in scores])
    layer_idx = np.concatenate(
        [np.full(s.size, i, dtype=np.int64) for i, s in enumerate(scores)])
    flat_idx = np.concatenate(
        [np.arange(s.size, dtype=np.int64) for s in scores])
    k = int(math.floor(ratio * flat_scores.size))

    masks = {n: np.ones(model.params[n].data.shape, dtype=model.dtype) for n in names}
    if k > 0:
        order = np.lexsort((flat_idx, layer_idx, flat_scores))
        for g in order[:k]:
            name = names[layer_idx[g]]
            masks[name].reshape(-1)[flat_idx[g]] = 0.0
    model.prune_masks = masks
    model.enforce_prune()
    return masks
