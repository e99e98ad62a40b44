"""Affine 6-bit quantization and quantization-noise training."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flowcodec.quant import (QuantizedTensor, dequantize, fake_quantize,
                             quant_noise_forward, quant_params, quantize,
                             round_half_away)
from flowcodec.rng import DetRng
from flowcodec.tensor import backward, mean, param


class TestRounding:
    def test_half_away_from_zero(self):
        vals = np.array([0.5, 1.5, -0.5, -1.5, 2.4, -2.4, 31.5])
        assert np.array_equal(round_half_away(vals),
                              [1.0, 2.0, -1.0, -2.0, 2.0, -2.0, 32.0])


class TestQuantParams:
    def test_symmetric_unit_range(self):
        # min=-1, max=1: scale 2/63, zero point round(31.5) -> 32
        scale, zp = quant_params(np.array([-1.0, 0.0, 1.0]))
        assert scale == pytest.approx(2.0 / 63.0, rel=1e-6)
        assert zp == 32

    def test_degenerate_tensor_floor(self):
        # an all-zero tensor has no range at all: scale floor, zp 0
        scale, zp = quant_params(np.zeros(16))
        assert scale == pytest.approx(1e-8)
        assert zp == 0
        q = quantize(np.zeros(16), scale, zp)
        assert len(np.unique(q)) == 1  # all symbols identical

    def test_nonzero_constant_recovered_exactly(self):
        t = np.full(16, 3.25, np.float32)
        scale, zp = quant_params(t)
        q = quantize(t, scale, zp)
        assert len(np.unique(q)) == 1
        assert np.allclose(dequantize(q, scale, zp), 3.25, rtol=1e-6)

    def test_non_negative_range_zero_point_zero(self):
        s0 = 0.01
        t = np.linspace(0.0, 63 * s0, 64)
        scale, zp = quant_params(t)
        assert zp == 0

    def test_empty_tensor(self):
        scale, zp = quant_params(np.zeros(0))
        assert scale > 0 and zp == 0

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            quant_params(np.array([1.0, np.nan]))


class TestRoundTrip:
    def test_zero_survives_exactly(self):
        t = np.array([-0.8, 0.0, 0.3, 1.2], np.float32)
        scale, zp = quant_params(t)
        q = quantize(t, scale, zp)
        back = dequantize(q, scale, zp)
        assert back[1] == 0.0
        assert q[1] == zp

    @given(arrays(np.float32, st.integers(1, 200),
                  elements=st.floats(-1e4, 1e4, allow_nan=False, width=32)))
    @settings(max_examples=60, deadline=None)
    def test_error_bound(self, t):
        # zero-anchored ranges make this hold for every finite input,
        # degenerate and offset tensors included
        scale, zp = quant_params(t)
        back = dequantize(quantize(t, scale, zp), scale, zp)
        bound = scale / 2 + np.spacing(np.float32(max(np.abs(t).max(), 1.0)))
        assert np.abs(back - t.astype(np.float64)).max() <= bound + 1e-12

    def test_symbols_use_six_bits(self):
        t = np.random.default_rng(0).normal(size=1000).astype(np.float32)
        scale, zp = quant_params(t)
        q = quantize(t, scale, zp)
        assert q.dtype == np.uint8
        assert q.min() >= 0 and q.max() <= 63

    def test_exhaustive_bound_on_random_tensor(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            t = (rng.normal(size=257) * rng.uniform(0.01, 100)).astype(np.float32)
            scale, zp = quant_params(t)
            back = dequantize(quantize(t, scale, zp), scale, zp)
            err = np.abs(back.astype(np.float64) - t.astype(np.float64))
            assert err.max() <= scale / 2 + np.spacing(np.float32(np.abs(t).max()))


class TestQuantNoise:
    def test_rho_zero_is_identity(self):
        p = param(np.random.default_rng(0).normal(size=64).astype(np.float32))
        out = quant_noise_forward(p, DetRng(1), 0.0)
        assert out is p

    def test_rho_one_fully_quantized(self):
        data = np.random.default_rng(1).normal(size=64).astype(np.float32)
        p = param(data.copy())
        out = quant_noise_forward(p, DetRng(2), 1.0)
        assert np.array_equal(out.data, fake_quantize(data))

    def test_replacement_fraction_concentrates(self):
        data = np.random.default_rng(2).normal(size=1_000_000).astype(np.float32)
        p = param(data.copy())
        out = quant_noise_forward(p, DetRng(3), 0.9)
        replaced = np.mean(out.data != data)
        # exact zeros re-quantize to themselves; exclude them from the count
        changed_possible = np.mean(fake_quantize(data) != data)
        assert 0.897 * changed_possible <= replaced <= 0.903 * changed_possible + 1e-9

    def test_straight_through_gradient(self):
        p = param(np.linspace(-1, 1, 32).astype(np.float32))
        out = quant_noise_forward(p, DetRng(4), 0.5)
        backward(mean(out))
        assert np.allclose(p.grad, np.full(32, 1 / 32), atol=1e-7)

    def test_rho_out_of_range(self):
        p = param(np.zeros(4, np.float32))
        with pytest.raises(ValueError):
            quant_noise_forward(p, DetRng(5), 1.5)


class TestQuantizedTensor:
    def test_from_array_round_trip(self):
        arr = np.random.default_rng(0).normal(size=(3, 5)).astype(np.float32)
        qt = QuantizedTensor.from_array("w", arr)
        assert qt.shape == (3, 5)
        assert qt.symbols.size == 15
        back = qt.to_array()
        assert back.shape == (3, 5)
        assert np.abs(back - arr).max() <= qt.scale / 2 + 1e-6

    def test_scalar_shape(self):
        qt = QuantizedTensor.from_array("s", np.float32(2.5))
        assert qt.shape == () and qt.symbols.size == 1

    def test_symbol_count_validated(self):
        with pytest.raises(ValueError):
            QuantizedTensor("w", (2, 2), np.zeros(3, np.uint8), 0.1, 0)

    def test_equality_is_bitwise(self):
        arr = np.random.default_rng(1).normal(size=8).astype(np.float32)
        a = QuantizedTensor.from_array("w", arr)
        b = QuantizedTensor.from_array("w", arr)
        assert a == b
        b.symbols = b.symbols.copy()
        b.symbols[0] ^= 1
        assert a != b
