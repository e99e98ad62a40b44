"""Width-adaptive magnitude pruning."""

import numpy as np
import pytest

from flowcodec.inr import InrModel
from flowcodec.pruning import apply_prune, prune_scores


class TestScores:
    def test_formula(self):
        (scores,) = prune_scores([np.array([-0.6, 0.2, 0.1, 0.3])])
        assert scores[0] == pytest.approx(0.3)  # |-0.6| / sqrt(4)

    def test_narrow_layer_protected(self):
        wide, narrow = prune_scores([np.ones(4), np.ones(1)])
        assert np.allclose(wide, 0.5)
        assert np.allclose(narrow, 1.0)

    def test_zero_layer_scores_zero(self):
        (scores,) = prune_scores([np.zeros(10)])
        assert not scores.any()

    def test_empty_layer_rejected(self):
        with pytest.raises(ValueError):
            prune_scores([np.zeros(0)])


def _model(seed=0):
    return InrModel(latent_channels=4, height=4, width=4, grid_t=2,
                    grid_channels=6, stages=1, mask_channels=4, seed=seed)


class TestApplyPrune:
    def test_ratio_zero_masks_nothing(self):
        model = _model()
        masks = apply_prune(model, 0.0)
        assert all(m.all() for m in masks.values())

    def test_bottom_k_matches_sort_oracle(self):
        model = _model(3)
        rng = np.random.default_rng(13)
        for p in model.params.values():  # zero-init biases would tie at 0
            p.data = rng.normal(size=p.data.shape).astype(np.float32)
        names = list(model.params)
        flat = np.concatenate([np.abs(model.params[n].data.reshape(-1))
                               / np.sqrt(model.params[n].data.size) for n in names])
        n_total = flat.size
        ratio = 0.15
        k = int(np.floor(ratio * n_total))
        cutoff_order = np.argsort(flat, kind="stable")[:k]
        expected = set(cutoff_order.tolist())

        masks = apply_prune(model, ratio)
        got = set()
        offset = 0
        for n in names:
            m = masks[n].reshape(-1)
            got.update((offset + np.flatnonzero(m == 0.0)).tolist())
            offset += m.size
        # distinct float scores here, so the oracle is unambiguous
        assert len(set(flat.tolist())) == n_total
        assert got == expected
        assert len(got) == k

    def test_exact_count_with_n20(self):
        model = _model(5)
        total = sum(p.data.size for p in model.params.values())
        masks = apply_prune(model, 0.15)
        masked = sum(int((m == 0.0).sum()) for m in masks.values())
        assert masked == int(np.floor(0.15 * total))

    def test_masked_weights_zeroed_immediately(self):
        model = _model(7)
        masks = apply_prune(model, 0.25)
        for name, mask in masks.items():
            assert np.all(model.params[name].data[mask == 0.0] == 0.0)

    def test_tie_break_by_layer_then_index(self):
        model = _model()
        # force identical scores everywhere: |theta| = sqrt(P) per layer
        for p in model.params.values():
            p.data = np.full_like(p.data, np.sqrt(p.data.size))
        total = sum(p.data.size for p in model.params.values())
        first = list(model.params)[0]
        k = int(np.floor(0.1 * total))
        masks = apply_prune(model, 0.1)
        # all-tied scores: pruning must consume the earliest layer, in
        # flat-index order, before touching any later one
        first_flat = masks[first].reshape(-1)
        expected_zeros = min(k, first_flat.size)
        assert np.all(first_flat[:expected_zeros] == 0.0)
        assert np.all(first_flat[expected_zeros:] == 1.0)

    @pytest.mark.parametrize("ratio", [-0.1, 1.0, 1.5])
    def test_ratio_out_of_range(self, ratio):
        with pytest.raises(ValueError):
            apply_prune(_model(), ratio)
