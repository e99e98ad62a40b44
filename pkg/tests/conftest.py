import numpy as np
import pytest

from flowcodec.pipeline import CodecConfig


@pytest.fixture(scope="session")
def fast_config():
    """Small geometry + short backbone pretraining for structural tests.

    Quality is irrelevant here; the backbone cache is shared across the
    whole pytest process, so every test using this fixture pays the
    pretraining cost at most once.
    """
    cfg = CodecConfig.toy(epochs=(6, 2, 2), master_seed=5)
    cfg.gop_size = 4
    cfg.dit.pretrain_steps = 60
    return cfg


@pytest.fixture(scope="session")
def fast_video():
    from flowcodec.video import synth_video
    return synth_video("moving-gradient", 4, 16, 16, seed=3)


@pytest.fixture(scope="session")
def fast_encode(fast_config, fast_video):
    """One shared encode of the fast clip (stream bytes)."""
    from flowcodec.pipeline import encode
    return encode(fast_video, fast_config)


def rel_err(a, b):
    return abs(a - b) / max(1e-12, abs(b))


def mean_frame_baseline(video: np.ndarray) -> np.ndarray:
    """Temporal-mean predictor: every frame replaced by the pixelwise mean."""
    mean = np.floor(video.astype(np.float64).mean(axis=0) + 0.5).astype(np.uint8)
    return np.ascontiguousarray(np.broadcast_to(mean, video.shape))
