"""Encoder/decoder orchestration: curriculum, loss mixing, GoP handling.

Encoding overfits, per group of pictures, a conditioning network plus
adapter coefficients through three stages (dense, pruning-aware,
quantization-aware), then quantizes and range-codes everything into a
self-contained segment. Decoding rebuilds the models from the segment
header, evaluates the conditioning, and integrates the learned velocity
field from seeded noise. Both directions are pure functions of their
inputs and seeds.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .backbone import pretrain_dit
from .bitstream import (HeaderError, TruncatedError, read_bitstream,
                        record_sizes, write_bitstream)
from .dit import DitModel, adapter_targets, dit_forward
from .flow import euler_sample, flow_loss, forward_process, sample_timestep
from .inr import (InrModel, cond_loss, conditioning_concat,
                  sample_gop_conditioning)
from .latent import LatentConfig, latent_decode, latent_encode
from .nola import NolaAdapterSet, apply_adapters
from .optim import AdamW, cosine_value
from .pruning import apply_prune
from .quant import QuantizedTensor, quant_noise_forward
from .rng import DetRng, stream_key
from .tensor import Tensor

ARCH_PROFILE = 1


@dataclass
class InrArch:
    grid_t: int = 4
    grid_channels: int = 32
    stages: int = 2
    mask_channels: int = 4


@dataclass
class DitArch:
    """Backbone shape plus its public pretraining recipe.

    The seed and pretraining hyperparameters identify the shared frozen
    backbone: both codec ends rebuild identical weights from them, the
    desk-scale analog of downloading the same pretrained checkpoint.
    """

    blocks: int = 2
    dim: int = 64
    heads: int = 4
    ff_mult: int = 4
    seed: int = 7
    pretrain_steps: int = 1200
    pretrain_lr: float = 2e-3


@dataclass
class NolaParams:
    bases: int = 64
    rank: int = 16
    scale: float = 0.25


@dataclass
class CurriculumConfig:
    """Stage lengths and training hyperparameters.

    Full-scale reference values: 25-frame GoPs trained for
    (300, 120, 60) epochs with lr 2e-3 (conditioning net) and 2e-4
    (adapter coefficients), 15% pruning, rho=0.9 quantization noise,
    and 6-bit quantization.
    """

    epochs: tuple[int, int, int] = (300, 120, 60)
    lr_inr: float = 2e-3
    lr_nola: float = 2e-4
    lr_final_frac: float = 0.05
    weight_decay: float = 0.0
    prune_ratio: float = 0.15
    quant_noise_rho: float = 0.9
    quant_bits: int = 6
    lambda_max: float = 0.99
    lambda_min: float = 0.05

    def validate(self) -> None:
        if len(self.epochs) != 3 or any(e <= 0 for e in self.epochs):
            raise ValueError("each curriculum stage needs epochs > 0")
        if self.lr_inr <= 0 or self.lr_nola <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ValueError("prune ratio must lie in [0, 1)")
        if not 0.0 <= self.quant_noise_rho <= 1.0:
            raise ValueError("quant-noise rho must lie in [0, 1]")
        if not 0.0 <= self.lambda_min <= self.lambda_max <= 1.0:
            raise ValueError("need 0 <= lambda_min <= lambda_max <= 1")


@dataclass
class CodecConfig:
    gop_size: int = 25
    latent_factors: tuple[int, int, int] = (1, 4, 4)
    inr: InrArch = field(default_factory=InrArch)
    dit: DitArch = field(default_factory=DitArch)
    nola: NolaParams = field(default_factory=NolaParams)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    sampler_steps: int = 20
    master_seed: int = 0

    def __post_init__(self):
        self.latent_factors = tuple(self.latent_factors)
        if isinstance(self.curriculum.epochs, list):
            self.curriculum.epochs = tuple(self.curriculum.epochs)

    # one master seed fans out into independent streams per purpose
    @property
    def inr_seed(self) -> int:
        return stream_key(self.master_seed, "inr-init")

    @property
    def nola_seed(self) -> int:
        return stream_key(self.master_seed, "nola-bases")

    @property
    def coeff_seed(self) -> int:
        return stream_key(self.master_seed, "nola-coeff-init")

    @property
    def train_seed(self) -> int:
        return stream_key(self.master_seed, "training")

    def noise_seed(self, gop_index: int) -> int:
        return stream_key(self.master_seed, f"decode-noise-{gop_index}")

    def latent_config(self) -> LatentConfig:
        return LatentConfig(*self.latent_factors)

    def validate(self) -> None:
        if self.gop_size < 1:
            raise ValueError("gop_size must be >= 1")
        if self.sampler_steps < 1:
            raise ValueError("sampler_steps must be >= 1")
        self.curriculum.validate()

    @classmethod
    def toy(cls, epochs=(60, 24, 12), master_seed: int = 1) -> "CodecConfig":
        """Desk-scale profile used throughout the test suite."""
        return cls(
            gop_size=8,
            latent_factors=(1, 4, 4),
            inr=InrArch(grid_t=4, grid_channels=32, stages=2, mask_channels=4),
            dit=DitArch(blocks=2, dim=64, heads=4, ff_mult=4),
            nola=NolaParams(bases=64, rank=16, scale=0.25),
            curriculum=CurriculumConfig(
                epochs=tuple(epochs), lr_inr=2e-2, lr_nola=2e-3),
            sampler_steps=20,
            master_seed=master_seed,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["latent_factors"] = list(self.latent_factors)
        d["curriculum"]["epochs"] = list(self.curriculum.epochs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CodecConfig":
        cfg = cls(
            gop_size=d.get("gop_size", 25),
            latent_factors=tuple(d.get("latent_factors", (1, 4, 4))),
            inr=InrArch(**d.get("inr", {})),
            dit=DitArch(**d.get("dit", {})),
            nola=NolaParams(**d.get("nola", {})),
            curriculum=CurriculumConfig(**{
                **d.get("curriculum", {}),
                "epochs": tuple(d.get("curriculum", {}).get("epochs", (300, 120, 60))),
            }),
            sampler_steps=d.get("sampler_steps", 20),
            master_seed=d.get("master_seed", 0),
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "CodecConfig":
        return cls.from_dict(json.loads(text))


def total_loss(l_flow: Tensor, l_cond: Tensor, step: int, total_dense_steps: int,
               lambda_max: float = 0.99, lambda_min: float = 0.05):
    """(1-lam) L_flow + lam L_cond with lam cosine-annealed over the dense
    stage and held at lambda_min afterwards. Returns (loss, lam)."""
    lam = cosine_value(min(step, total_dense_steps), total_dense_steps,
                       lambda_max, lambda_min)
    return T.add(T.mul(l_flow, 1.0 - lam), T.mul(l_cond, lam)), lam


@dataclass
class TrainResult:
    inr: InrModel
    adapters: NolaAdapterSet
    dit: DitModel
    z0: np.ndarray
    trace: list[dict]


def run_curriculum(gop: np.ndarray, cfg: CodecConfig,
                   mask_mode: str = "learned") -> TrainResult:
    """Three-stage training on one GoP.

    Stage 1 trains the conditioning net and adapter coefficients jointly
    from scratch; stage 2 prunes the conditioning net and fine-tunes
    with masks enforced; stage 3 turns on quantization noise and drops
    the conditioning-net learning rate 10x. The diffusion backbone stays
    frozen throughout. Deterministic given cfg.master_seed.
    """
    if mask_mode not in ("learned", "uniform"):
        raise ValueError(f"unknown mask_mode {mask_mode!r}")
    cfg.validate()
    cur = cfg.curriculum
    lcfg = cfg.latent_config()
    z0 = latent_encode(gop, lcfg)
    tp, ch, hp, wp = z0.shape

    inr = InrModel(ch, hp, wp, grid_t=cfg.inr.grid_t,
                   grid_channels=cfg.inr.grid_channels, stages=cfg.inr.stages,
                   mask_channels=cfg.inr.mask_channels, seed=cfg.inr_seed)
    dit = pretrain_dit(2 * ch + cfg.inr.mask_channels, ch,
                       cfg.dit.blocks, cfg.dit.dim, cfg.dit.heads,
                       cfg.dit.ff_mult, cfg.dit.seed, cfg.dit.pretrain_steps,
                       cfg.dit.pretrain_lr, (tp, hp, wp),
                       cfg.inr.mask_channels)
    adapters = NolaAdapterSet.create(
        cfg.nola_seed, cfg.nola.bases, cfg.nola.rank, cfg.nola.scale,
        [(t, dit.params[t].data.shape[0], dit.params[t].data.shape[1])
         for t in adapter_targets(cfg.dit.blocks)],
        coeff_rng=DetRng(cfg.coeff_seed))
    adapted = apply_adapters(dit, adapters, "dynamic")

    opt_inr = AdamW(inr.params, cur.lr_inr, weight_decay=cur.weight_decay)
    opt_nola = AdamW(adapters.coefficient_params(), cur.lr_nola,
                     weight_decay=cur.weight_decay)
    rng = DetRng(cfg.train_seed)
    # conditioning tensors are channel-first; compare latents in that layout
    z0_cond = Tensor(np.ascontiguousarray(z0.transpose(1, 0, 2, 3)))

    trace: list[dict] = []
    step = 0
    for stage in (1, 2, 3):
        n_epochs = cur.epochs[stage - 1]
        if stage == 2:
            apply_prune(inr, cur.prune_ratio)
        base_lr_inr = cur.lr_inr / 10.0 if stage == 3 else cur.lr_inr
        for epoch in range(n_epochs):
            weight_fn = None
            adapted.coeff_fn = None
            if stage == 3:
                # one noise draw per tensor per step, in a fixed order
                noisy = {
                    name: quant_noise_forward(p, rng, cur.quant_noise_rho,
                                              cur.quant_bits)
                    for name, p in inr.params.items()
                }
                weight_fn = lambda name, p: noisy[name]
                noisy_coeffs = {}
                for target, rec in adapters.records.items():
                    noisy_coeffs[(target, "alpha")] = quant_noise_forward(
                        rec.alpha, rng, cur.quant_noise_rho, cur.quant_bits)
                    noisy_coeffs[(target, "beta")] = quant_noise_forward(
                        rec.beta, rng, cur.quant_noise_rho, cur.quant_bits)
                adapted.coeff_fn = lambda tgt, which, t: noisy_coeffs[(tgt, which)]

            t_draw = sample_timestep(rng)
            eps = rng.normals(z0.shape, dtype=np.float32)
            y, mask = sample_gop_conditioning(inr, tp, weight_fn)
            if mask_mode == "uniform":
                mask = Tensor(np.ones_like(mask.data))
            c = conditioning_concat(y, mask)
            z_t, v_star = forward_process(z0, eps, t_draw)
            v_hat = dit_forward(adapted, Tensor(z_t), t_draw, c)
            l_flow = flow_loss(v_hat, Tensor(v_star))
            l_cond = cond_loss(y, z0_cond)
            loss, lam = total_loss(l_flow, l_cond, step, cur.epochs[0],
                                   cur.lambda_max, cur.lambda_min)

            opt_inr.zero_grad()
            opt_nola.zero_grad()
            T.backward(loss)
            opt_inr.lr = cosine_value(epoch, n_epochs, base_lr_inr,
                                      base_lr_inr * cur.lr_final_frac)
            opt_nola.lr = cosine_value(epoch, n_epochs, cur.lr_nola,
                                       cur.lr_nola * cur.lr_final_frac)
            opt_inr.step()
            opt_nola.step()
            inr.enforce_prune()

            trace.append({
                "stage": stage, "epoch": epoch, "step": step,
                "loss": loss.item(), "l_flow": l_flow.item(),
                "l_cond": l_cond.item(), "lambda": lam,
            })
            step += 1
    adapted.coeff_fn = None
    return TrainResult(inr, adapters, dit, z0, trace)


# serialization ------------------------------------------------------------

_INR_PREFIX = "inr."
_NOLA_PREFIX = "nola."


def _segment_artifacts(result: TrainResult, cfg: CodecConfig,
                       gop_shape: tuple[int, int, int],
                       noise_seed: int) -> tuple[dict, list[QuantizedTensor]]:
    """Header and quantized tensor list for one GoP segment."""
    bits = cfg.curriculum.quant_bits
    tensors: list[QuantizedTensor] = []
    for name, p in result.inr.params.items():
        tensors.append(QuantizedTensor.from_array(_INR_PREFIX + name, p.data, bits))
    for target, rec in result.adapters.records.items():
        tensors.append(QuantizedTensor.from_array(
            f"{_NOLA_PREFIX}{target}.alpha", rec.alpha.data, bits))
        tensors.append(QuantizedTensor.from_array(
            f"{_NOLA_PREFIX}{target}.beta", rec.beta.data, bits))

    t, h, w = gop_shape
    header = {
        "arch_profile": ARCH_PROFILE,
        "gop": {"frames": t, "height": h, "width": w},
        "latent": {"f_t": cfg.latent_factors[0], "f_h": cfg.latent_factors[1],
                   "f_w": cfg.latent_factors[2]},
        "inr": result.inr.arch_descriptor(),
        "dit": {
            "in_channels": result.dit.in_channels,
            "out_channels": result.dit.out_channels,
            "blocks": result.dit.blocks,
            "dim": result.dit.dim,
            "heads": result.dit.heads,
            "ff_mult": result.dit.ff_mult,
            "seed": cfg.dit.seed,
            "pretrain_steps": cfg.dit.pretrain_steps,
            "pretrain_lr": cfg.dit.pretrain_lr,
        },
        "nola": {
            "seed": cfg.nola_seed,
            "bases": cfg.nola.bases,
            "rank": cfg.nola.rank,
            "scale": cfg.nola.scale,
            "targets": [[t_, m, n] for t_, m, n in result.adapters.mappings()],
        },
        "sampler": {"steps": cfg.sampler_steps, "noise_seed": noise_seed},
        "curriculum": {
            "epochs": list(cfg.curriculum.epochs),
            "lr_inr": cfg.curriculum.lr_inr,
            "lr_nola": cfg.curriculum.lr_nola,
            "lambda_max": cfg.curriculum.lambda_max,
            "lambda_min": cfg.curriculum.lambda_min,
            "prune_ratio": cfg.curriculum.prune_ratio,
            "quant_noise_rho": cfg.curriculum.quant_noise_rho,
            "quant_bits": bits,
        },
    }
    return header, tensors


_REQUIRED_HEADER_KEYS = ("arch_profile", "gop", "latent", "inr", "dit",
                         "nola", "sampler")


def _reconstruct_segment(header: dict, tensors: list[QuantizedTensor],
                         zero_conditioning: bool = False) -> np.ndarray:
    """Shared decode core: header + quantized tensors -> uint8 GoP."""
    for key in _REQUIRED_HEADER_KEYS:
        if key not in header:
            raise HeaderError(f"missing header field {key!r}")
    if header["arch_profile"] != ARCH_PROFILE:
        raise HeaderError(
            f"architecture profile {header['arch_profile']} unsupported "
            f"(this build understands {ARCH_PROFILE})")

    by_id = {qt.tensor_id: qt for qt in tensors}
    inr = InrModel.from_descriptor(header["inr"])
    inr.load_state({
        name: by_id[_INR_PREFIX + name].to_array()
        for name in inr.params if _INR_PREFIX + name in by_id
    })
    inr.freeze()

    nola = header["nola"]
    mappings = [(t_, int(m), int(n)) for t_, m, n in nola["targets"]]
    coefficients = {}
    for target, _, _ in mappings:
        coefficients[target] = (
            by_id[f"{_NOLA_PREFIX}{target}.alpha"].to_array(),
            by_id[f"{_NOLA_PREFIX}{target}.beta"].to_array())
    adapters = NolaAdapterSet.from_coefficients(
        nola["seed"], nola["bases"], nola["rank"], nola["scale"],
        mappings, coefficients)

    lat = header["latent"]
    lcfg = LatentConfig(lat["f_t"], lat["f_h"], lat["f_w"])
    gop = header["gop"]
    tp, hp, wp = lcfg.latent_dims(gop["frames"], gop["height"], gop["width"])

    d = header["dit"]
    dit = pretrain_dit(d["in_channels"], d["out_channels"], d["blocks"],
                       d["dim"], d["heads"], d["ff_mult"], d["seed"],
                       d["pretrain_steps"], d["pretrain_lr"], (tp, hp, wp),
                       header["inr"]["mask_channels"])
    merged = apply_adapters(dit, adapters, "merged")
    y, mask = sample_gop_conditioning(inr, tp)
    if zero_conditioning:
        c = np.zeros_like(conditioning_concat(y, mask).data)
    else:
        c = conditioning_concat(y, mask).data
    z0_hat = euler_sample(merged, c, header["sampler"]["steps"],
                          header["sampler"]["noise_seed"])
    return latent_decode(z0_hat, lcfg)


def gop_slices(total_frames: int, gop_size: int) -> list[slice]:
    """Fixed-size chunks; a shorter final GoP is allowed."""
    if total_frames < 1:
        raise ValueError("empty video")
    return [slice(i, min(i + gop_size, total_frames))
            for i in range(0, total_frames, gop_size)]


def encode(video: np.ndarray, cfg: CodecConfig) -> bytes:
    """Compress a video into the multi-segment container.

    Layout: u32 segment count, then u32 length + DIVB segment per GoP.
    Segments are independent (each GoP trains from scratch).
    """
    cfg.validate()
    if video.ndim != 4 or video.shape[-1] != 3 or video.dtype != np.uint8:
        raise ValueError("encode expects uint8 video of shape (T,H,W,3)")
    lcfg = cfg.latent_config()
    chunks = gop_slices(video.shape[0], cfg.gop_size)
    for sl in chunks:
        # raises if the (possibly short) GoP is not divisible by the factors
        lcfg.latent_dims(sl.stop - sl.start, video.shape[1], video.shape[2])

    segments = []
    for index, sl in enumerate(chunks):
        gop = video[sl]
        result = run_curriculum(gop, cfg)
        header, tensors = _segment_artifacts(
            result, cfg, gop.shape[:3], cfg.noise_seed(index))
        segments.append(write_bitstream(tensors, header))

    out = bytearray(struct.pack("<I", len(segments)))
    for seg in segments:
        out += struct.pack("<I", len(seg))
        out += seg
    return bytes(out)


def split_segments(stream: bytes) -> list[bytes]:
    if len(stream) < 4:
        raise TruncatedError("container shorter than its count prefix")
    count = struct.unpack("<I", stream[:4])[0]
    pos = 4
    segments = []
    for _ in range(count):
        if pos + 4 > len(stream):
            raise TruncatedError("container truncated at segment length")
        (length,) = struct.unpack("<I", stream[pos:pos + 4])
        pos += 4
        if pos + length > len(stream):
            raise TruncatedError("container truncated inside a segment")
        segments.append(stream[pos:pos + length])
        pos += length
    if pos != len(stream):
        raise TruncatedError(f"{len(stream) - pos} trailing container bytes")
    return segments


def decode(stream: bytes, zero_conditioning: bool = False) -> np.ndarray:
    """Rebuild the video from a container produced by encode()."""
    gops = []
    for seg in split_segments(stream):
        header, tensors = read_bitstream(seg)
        gops.append(_reconstruct_segment(header, tensors, zero_conditioning))
    if not gops:
        raise TruncatedError("container holds no segments")
    return np.concatenate(gops, axis=0)


def encoder_reconstruction(result: TrainResult, cfg: CodecConfig,
                           gop_shape: tuple[int, int, int],
                           noise_seed: int) -> np.ndarray:
    """The encoder's own end-of-training reconstruction.

    Runs the identical quantize/rebuild/sample path the decoder will
    run, without the container round trip.
    """
    header, tensors = _segment_artifacts(result, cfg, gop_shape, noise_seed)
    return _reconstruct_segment(header, tensors)


def payload_breakdown(stream: bytes) -> dict:
    """Bytes by payload family across all segments, plus the INR share."""
    inr_bytes = 0
    nola_bytes = 0
    for seg in split_segments(stream):
        for tid, size in record_sizes(seg).items():
            if tid.startswith(_INR_PREFIX):
                inr_bytes += size
            elif tid.startswith(_NOLA_PREFIX):
                nola_bytes += size
    record_bytes = inr_bytes + nola_bytes
    return {
        "inr_bytes": inr_bytes,
        "nola_bytes": nola_bytes,
        "record_bytes": record_bytes,
        "container_bytes": len(stream),
        "inr_share": inr_bytes / record_bytes if record_bytes else 0.0,
    }
