"""Seeded adapters: basis generation, deltas, injection, parameter counts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowcodec import tensor as T
from flowcodec.dit import DitModel, adapter_targets, dit_forward
from flowcodec.nola import (NolaAdapterSet, apply_adapters, delta_weight,
                            generate_bases, trainable_param_count)
from flowcodec.rng import DetRng
from flowcodec.tensor import Tensor, backward


def make_adapters(seed=11, b=8, r=4, mappings=None, coeff_rng=DetRng(55)):
    mappings = mappings or [("w0", 6, 5), ("w1", 3, 7)]
    return NolaAdapterSet.create(seed, b, r, 0.25, mappings, coeff_rng=coeff_rng)


class TestGenerateBases:
    def test_bit_identical_regeneration(self):
        a = generate_bases(1, "layer.w", 5, 4, 3, 2, 0.25)
        b = generate_bases(1, "layer.w", 5, 4, 3, 2, 0.25)
        assert a[0].tobytes() == b[0].tobytes()
        assert a[1].tobytes() == b[1].tobytes()

    def test_distinct_targets_distinct_bases(self):
        a = generate_bases(1, "layer.w", 5, 4, 3, 2)
        b = generate_bases(1, "layer.v", 5, 4, 3, 2)
        assert not np.array_equal(a[0], b[0])

    def test_shapes_at_rank_64(self):
        bmat, amat = generate_bases(0, "t", 10, 12, 64, 2)
        assert bmat.shape == (2, 10, 64)
        assert amat.shape == (2, 64, 12)

    def test_entry_variance_matches_scale(self):
        # s = 0.25 is a variance: the Monte Carlo estimate over 1e6 entries
        bmat, amat = generate_bases(3, "big", 100, 100, 50, 1, 0.25)
        entries = np.concatenate([bmat.reshape(-1), amat.reshape(-1)])
        assert entries.size >= 10_000
        big_b, big_a = generate_bases(3, "bigger", 250, 250, 40, 50, 0.25)
        pool = np.concatenate([big_b.reshape(-1), big_a.reshape(-1)])[:1_000_000]
        assert abs(pool.var() - 0.25) < 0.01

    def test_rejects_degenerate_dims(self):
        with pytest.raises(ValueError):
            generate_bases(0, "t", 0, 3, 2, 1)


class TestDeltaWeight:
    def test_zero_beta_annihilates(self):
        adapters = make_adapters()
        rec = adapters.records["w0"]
        rec.alpha.data = np.random.default_rng(0).normal(size=8).astype(np.float32)
        rec.beta.data = np.zeros(8, np.float32)
        assert not delta_weight(adapters, rec).any()

    def test_single_basis_bilinearity(self):
        adapters = make_adapters(b=1)
        rec = adapters.records["w0"]
        rec.alpha.data = np.array([2.0], np.float32)
        rec.beta.data = np.array([3.0], np.float32)
        bmat, amat = adapters.bases_for(rec)
        assert np.allclose(delta_weight(adapters, rec), 6.0 * bmat[0] @ amat[0],
                           rtol=1e-6)

    @given(k=st.floats(-4, 4, allow_nan=False, width=32))
    @settings(max_examples=25, deadline=None)
    def test_scaling_alpha_scales_delta(self, k):
        adapters = make_adapters()
        rec = adapters.records["w1"]
        rec.alpha.data = np.linspace(-1, 1, 8, dtype=np.float32)
        rec.beta.data = np.linspace(0.5, -0.5, 8, dtype=np.float32)
        base = delta_weight(adapters, rec)
        rec.alpha.data = (rec.alpha.data * np.float32(k))
        scaled = delta_weight(adapters, rec)
        assert np.allclose(scaled, np.float32(k) * base, rtol=1e-4, atol=1e-6)

    def test_serialize_regenerate_is_bit_exact(self):
        adapters = make_adapters(seed=77)
        rec = adapters.records["w0"]
        rec.alpha.data = np.random.default_rng(1).normal(size=8).astype(np.float32)
        rec.beta.data = np.random.default_rng(2).normal(size=8).astype(np.float32)
        before = delta_weight(adapters, rec)
        # round-trip the coefficients as raw bits, rebuild everything
        coeffs = {t: (r.alpha.data.tobytes(), r.beta.data.tobytes())
                  for t, r in adapters.records.items()}
        rebuilt = NolaAdapterSet.from_coefficients(
            77, 8, 4, 0.25, adapters.mappings(),
            {t: (np.frombuffer(a, np.float32), np.frombuffer(bb, np.float32))
             for t, (a, bb) in coeffs.items()})
        after = delta_weight(rebuilt, rebuilt.records["w0"])
        assert before.tobytes() == after.tobytes()

    def test_coefficient_length_enforced(self):
        adapters = make_adapters()
        rec = adapters.records["w0"]
        rec.alpha.data = np.zeros(5, np.float32)
        with pytest.raises(ValueError):
            delta_weight(adapters, rec)


class TestParamCount:
    def test_full_scale_identity(self):
        # 30 blocks x 3 mappings + 1 head = 91 mappings, b=500 -> 91,000
        mappings = [(n, 64, 64) for n in adapter_targets(30)]
        adapters = NolaAdapterSet.create(0, 500, 64, 0.25, mappings)
        assert trainable_param_count(adapters) == 91_000

    def test_formula_toy(self):
        mappings = [(n, 8, 8) for n in adapter_targets(2)]
        adapters = NolaAdapterSet.create(0, 8, 4, 0.25, mappings)
        assert trainable_param_count(adapters) == 112  # 7 mappings * 2 * 8

    def test_single_mapping_b1(self):
        adapters = NolaAdapterSet.create(0, 1, 1, 0.25, [("w", 3, 3)])
        assert trainable_param_count(adapters) == 2

    @given(st.integers(1, 6), st.integers(1, 64),
           st.integers(1, 200), st.integers(1, 200), st.integers(1, 128))
    @settings(max_examples=30, deadline=None)
    def test_independent_of_shapes_and_rank(self, blocks, b, m, n, r):
        mappings = [(t, m, n) for t in adapter_targets(blocks)]
        adapters = NolaAdapterSet.create(0, b, r, 0.25, mappings)
        assert trainable_param_count(adapters) == 2 * b * len(mappings)


class TestApplyAdapters:
    def _setup(self):
        model = DitModel(16, 6, blocks=1, dim=16, heads=2, ff_mult=2, seed=2)
        model.freeze()
        mappings = [(t, model.params[t].data.shape[0], model.params[t].data.shape[1])
                    for t in adapter_targets(1)]
        adapters = NolaAdapterSet.create(9, 8, 4, 0.25, mappings,
                                         coeff_rng=DetRng(3))
        for rec in adapters.records.values():
            rec.beta.data = DetRng(4).normals(8, dtype=np.float32) * 0.1
        z_t = np.random.default_rng(0).normal(size=(2, 6, 4, 4)).astype(np.float32)
        c = np.random.default_rng(1).normal(size=(10, 2, 4, 4)).astype(np.float32)
        return model, adapters, z_t, c

    def test_merged_equals_dynamic(self):
        model, adapters, z_t, c = self._setup()
        merged = apply_adapters(model, adapters, "merged")
        dynamic = apply_adapters(model, adapters, "dynamic")
        out_m = dit_forward(merged, z_t, 0.5, c)
        out_d = dit_forward(dynamic, z_t, 0.5, c)
        assert np.abs(out_m.data - out_d.data).max() <= 1e-5

    def test_zero_coefficients_identity(self):
        model, adapters, z_t, c = self._setup()
        for rec in adapters.records.values():
            rec.beta.data = np.zeros_like(rec.beta.data)
        merged = apply_adapters(model, adapters, "merged")
        out_m = dit_forward(merged, z_t, 0.5, c)
        out_base = dit_forward(model, z_t, 0.5, c)
        assert np.array_equal(out_m.data, out_base.data)

    def test_frozen_base_gets_zero_gradient_in_dynamic_mode(self):
        model, adapters, z_t, c = self._setup()
        dynamic = apply_adapters(model, adapters, "dynamic")
        out = dit_forward(dynamic, z_t, 0.5, c)
        grads = backward(T.mse(out, Tensor(np.zeros_like(z_t))), model.params)
        for name, g in grads.items():
            assert not g.any(), f"base weight {name} received gradient"
        # while the coefficients do learn
        alpha_grads = [rec.alpha.grad for rec in adapters.records.values()]
        assert any(g is not None and g.any() for g in alpha_grads)

    def test_unresolvable_target_rejected(self):
        model, adapters, _, _ = self._setup()
        bad = NolaAdapterSet.create(9, 8, 4, 0.25, [("nope.weight", 3, 3)])
        with pytest.raises(KeyError):
            apply_adapters(model, bad, "merged")

    def test_unknown_mode_rejected(self):
        model, adapters, _, _ = self._setup()
        with pytest.raises(ValueError):
            apply_adapters(model, adapters, "replace")
