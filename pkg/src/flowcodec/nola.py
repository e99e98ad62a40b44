"""Seeded low-rank adapters: coefficient-only fine-tuning.

Each adapted weight matrix W0 (m x n) gets a delta
    dW = (sum_i beta_i B_i) @ (sum_i alpha_i A_i)
where the b basis pairs {B_i: m x r, A_i: r x n} are pseudo-random,
regenerated on demand from (seed, target id, shapes) and never stored or
transmitted. Only the 2b coefficients per mapping train and ship, so the
bitstream cost is independent of the backbone's width and of the rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .rng import DetRng, stream_key
from .tensor import Tensor


def generate_bases(seed: int, target_id: str, m: int, n: int, r: int, b: int,
                   s: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Regenerate the basis stacks for one mapping.

    Entries are i.i.d. Normal(0, variance s). The stream is keyed by
    splitmix64(seed XOR hash64(target_id)); draws fill all B matrices in
    row-major order, then all A matrices, so the layout is bit-identical
    across runs and platforms. Returns (B, A) stacked as
    (b, m, r) and (b, r, n) float32 arrays.
    """
    if min(m, n, r, b) < 1:
        raise ValueError("basis dimensions must be >= 1")
    rng = DetRng(stream_key(seed, target_id))
    std = math.sqrt(s)
    draws = rng.normals(b * m * r + b * r * n) * std
    b_stack = draws[: b * m * r].reshape(b, m, r).astype(np.float32)
    a_stack = draws[b * m * r:].reshape(b, r, n).astype(np.float32)
    return b_stack, a_stack


@dataclass
class AdapterRecord:
    """Trainable coefficients for one adapted mapping."""

    target: str
    m: int
    n: int
    alpha: Tensor
    beta: Tensor
    _cache: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)


class NolaAdapterSet:
    """All adapter records for one model, sharing (seed, b, r, s)."""

    def __init__(self, seed: int, bases: int, rank: int, scale: float,
                 records: dict[str, AdapterRecord]):
        self.seed = int(seed)
        self.bases = int(bases)
        self.rank = int(rank)
        self.scale = float(scale)
        self.records = records

    @classmethod
    def create(cls, seed: int, bases: int, rank: int, scale: float,
               mappings: list[tuple[str, int, int]],
               coeff_rng: DetRng | None = None,
               dtype=np.float32) -> "NolaAdapterSet":
        """Fresh adapter set over (target, m, n) mappings.

        beta starts at zero and alpha at Normal(0, 1/b) when a
        coefficient rng is supplied (zeros otherwise), so the initial
        delta is exactly zero and adaptation starts from the untouched
        backbone.
        """
        records: dict[str, AdapterRecord] = {}
        alpha_std = math.sqrt(1.0 / bases)
        for target, m, n in mappings:
            if target in records:
                raise ValueError(f"duplicate adapter target {target!r}")
            if coeff_rng is None:
                alpha = np.zeros(bases, dtype=dtype)
            else:
                alpha = (coeff_rng.normals(bases) * alpha_std).astype(dtype)
            records[target] = AdapterRecord(
                target, int(m), int(n),
                T.param(alpha, dtype=dtype),
                T.param(np.zeros(bases, dtype=dtype), dtype=dtype))
        return cls(seed, bases, rank, scale, records)

    @classmethod
    def from_coefficients(cls, seed: int, bases: int, rank: int, scale: float,
                          mappings: list[tuple[str, int, int]],
                          coefficients: dict[str, tuple[np.ndarray, np.ndarray]],
                          dtype=np.float32) -> "NolaAdapterSet":
        """Rebuild from transmitted (alpha, beta) vectors (decode path)."""
        adapters = cls.create(seed, bases, rank, scale, mappings, dtype=dtype)
        for target, rec in adapters.records.items():
            alpha, beta = coefficients[target]
            if len(alpha) != bases or len(beta) != bases:
                raise ValueError(f"coefficient length mismatch for {target!r}")
            rec.alpha.data = np.asarray(alpha, dtype=dtype).copy()
            rec.beta.data = np.asarray(beta, dtype=dtype).copy()
        return adapters

    def bases_for(self, record: AdapterRecord) -> tuple[np.ndarray, np.ndarray]:
        if record._cache is None:
            record._cache = generate_bases(self.seed, record.target, record.m,
                                           record.n, self.rank, self.bases, self.scale)
        return record._cache

    def coefficient_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for target, rec in self.records.items():
            out[f"{target}.alpha"] = rec.alpha
            out[f"{target}.beta"] = rec.beta
        return out

    def mappings(self) -> list[tuple[str, int, int]]:
        return [(rec.target, rec.m, rec.n) for rec in self.records.values()]


def trainable_param_count(adapters: NolaAdapterSet) -> int:
    """2 * b per mapping; independent of m, n, and the rank."""
    return sum(rec.alpha.size + rec.beta.size for rec in adapters.records.values())


def delta_weight(adapters: NolaAdapterSet, record: AdapterRecord) -> np.ndarray:
    """Numeric delta (sum beta_i B_i)(sum alpha_i A_i) as float32 (m, n)."""
    if record.alpha.size != adapters.bases or record.beta.size != adapters.bases:
        raise ValueError(f"coefficient length != b for {record.target!r}")
    b_stack, a_stack = adapters.bases_for(record)
    b_sum = np.tensordot(record.beta.data, b_stack, axes=1)
    a_sum = np.tensordot(record.alpha.data, a_stack, axes=1)
    return b_sum @ a_sum


def delta_weight_expr(adapters: NolaAdapterSet, record: AdapterRecord,
                      coeff_fn=None) -> Tensor:
    """Differentiable delta; gradients flow only into alpha and beta.

    coeff_fn optionally transforms the coefficient tensors (used for
    quantization-noise training).
    """
    b_stack, a_stack = adapters.bases_for(record)
    alpha, beta = record.alpha, record.beta
    if coeff_fn is not None:
        alpha = coeff_fn(record.target, "alpha", alpha)
        beta = coeff_fn(record.target, "beta", beta)
    nb = adapters.bases
    b_sum = T.reshape(
        T.matmul(T.reshape(beta, (1, nb)),
                 Tensor(b_stack.reshape(nb, record.m * adapters.rank),
                        dtype=beta.dtype)),
        (record.m, adapters.rank))
    a_sum = T.reshape(
        T.matmul(T.reshape(alpha, (1, nb)),
                 Tensor(a_stack.reshape(nb, adapters.rank * record.n),
                        dtype=alpha.dtype)),
        (adapters.rank, record.n))
    return T.matmul(b_sum, a_sum)


class AdaptedDit:
    """Dynamic view over a frozen base model: adapted weights are built
    as graph expressions at lookup time, so only coefficients train."""

    def __init__(self, base, adapters: NolaAdapterSet, coeff_fn=None):
        self.base = base
        self.adapters = adapters
        self.coeff_fn = coeff_fn

    def weight(self, name: str) -> Tensor:
        p = self.base.params[name]
        rec = self.adapters.records.get(name)
        if rec is None:
            return p
        return T.add(p.detach(), delta_weight_expr(self.adapters, rec, self.coeff_fn))


def apply_adapters(model, adapters: NolaAdapterSet, mode: str):
    """Attach adapters to a DitModel.

    merged: returns a new model with W0 + dW baked in (flat inference
    cost). dynamic: returns a view that recomputes deltas each forward
    with gradients confined to the coefficients.
    """
    for target, rec in adapters.records.items():
        p = model.params.get(target)
        if p is None:
            raise KeyError(f"adapter target {target!r} not found in model")
        if p.data.shape != (rec.m, rec.n):
            raise ValueError(f"adapter target {target!r} shape {p.data.shape} != "
                             f"({rec.m}, {rec.n})")
    if mode == "merged":
        merged = model.clone()
        for target, rec in adapters.records.items():
            merged.params[target].data = (
                model.params[target].data + delta_weight(adapters, rec))
        return merged
    if mode == "dynamic":
        return AdaptedDit(model, adapters)
    raise ValueError(f"unknown adapter mode {mode!r}")
