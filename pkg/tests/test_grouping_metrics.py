"""Grouping metric contracts: normalization, grid labeling, region means,
GI/AR values and exclusions, aggregation, and the brute-force oracle."""

import numpy as np
import pytest

from grouplens.errors import ContractViolation, ShapeError
from grouplens.grouping_metrics import (
    ChannelScore, RegionMeans, StimulusScores, aggregate,
    attention_ratio, grouping_index, labels_to_grid, normalize_channels,
    region_means, score_channels,
)
from oracles import grouping_scores_bruteforce


def single_channel(values):
    return np.asarray(values, dtype=np.float64)[:, :, None]


class TestNormalizeChannels:
    def test_min_max(self):
        out = normalize_channels(single_channel([[2.0, 4.0], [6.0, 6.0]]))
        np.testing.assert_allclose(out[:, :, 0], [[0.0, 0.5], [1.0, 1.0]])

    def test_constant_channel_maps_to_zero(self):
        out = normalize_channels(single_channel([[5.0, 5.0], [5.0, 5.0]]))
        assert np.all(out == 0.0)

    def test_negative_values(self):
        out = normalize_channels(single_channel([[-1.0, 0.0], [1.0, 1.0]]))
        np.testing.assert_allclose(out[:, :, 0], [[0.0, 0.5], [1.0, 1.0]])

    def test_channels_normalized_independently(self):
        data = np.stack([np.array([[0.0, 1.0]]), np.array([[10.0, 30.0]])], axis=2)
        out = normalize_channels(data)
        np.testing.assert_allclose(out[0, :, 0], [0.0, 1.0])
        np.testing.assert_allclose(out[0, :, 1], [0.0, 1.0])


class TestLabelsToGrid:
    def test_full_quadrant(self):
        labels = np.zeros((32, 32), dtype=np.uint8)
        labels[:16, :16] = 1
        grid = labels_to_grid(labels, (2, 2))
        assert grid[0, 0] == 1 and grid.sum() == 1

    def test_exact_half_is_background(self):
        labels = np.zeros((32, 32), dtype=np.uint8)
        labels[:8, :16] = 1  # exactly 50% of the top-left cell
        grid = labels_to_grid(labels, (2, 2))
        assert grid[0, 0] == 0

    def test_all_zero(self):
        assert np.all(labels_to_grid(np.zeros((16, 16), dtype=np.uint8), (4, 4)) == 0)

    def test_majority_vs_presence(self):
        labels = np.zeros((32, 32), dtype=np.uint8)
        labels[0:6, 0:6] = 1      # 36 px in a 256 px cell
        labels[16:22, 16:22] = 2
        majority = labels_to_grid(labels, (2, 2))
        presence = labels_to_grid(labels, (2, 2), mode="presence")
        assert np.all(majority == 0)
        assert presence[0, 0] == 1 and presence[1, 1] == 2

    def test_presence_both_groups_falls_back_to_count(self):
        labels = np.zeros((16, 16), dtype=np.uint8)
        labels[0:4, 0:16] = 1
        labels[4:6, 0:16] = 2
        grid = labels_to_grid(labels, (1, 1), mode="presence")
        assert grid[0, 0] == 1

    def test_non_divisible_uses_nearest_cell(self):
        labels = np.zeros((30, 30), dtype=np.uint8)
        labels[:15, :15] = 1
        grid = labels_to_grid(labels, (2, 2))
        assert grid[0, 0] == 1 and grid.sum() == 1

    def test_unknown_mode_rejected(self):
        with pytest.raises(ContractViolation):
            labels_to_grid(np.zeros((4, 4), dtype=np.uint8), (2, 2), mode="blend")


class TestRegionMeans:
    def test_arithmetic_example(self):
        norm = single_channel([[0.2, 0.4], [0.6, 0.8]])
        labels = np.array([[1, 1], [2, 0]])
        means = region_means(norm, labels)
        assert means.a_g1[0] == pytest.approx(0.3)
        assert means.a_g2[0] == pytest.approx(0.6)
        assert means.a_bkg[0] == pytest.approx(0.8)
        assert means.included_gi[0] and means.included_ar[0]

    def test_all_zero_channel_excluded_from_gi(self):
        norm = single_channel([[0.0, 0.0], [0.0, 0.0]])
        labels = np.array([[1, 1], [2, 0]])
        means = region_means(norm, labels)
        assert not means.included_gi[0] and not means.included_ar[0]

    def test_zero_background_keeps_gi_drops_ar(self):
        norm = single_channel([[0.5, 0.7], [0.2, 0.0]])
        labels = np.array([[1, 1], [2, 0]])
        means = region_means(norm, labels)
        assert means.included_gi[0] and not means.included_ar[0]

    def test_empty_region_clears_inclusion(self):
        norm = single_channel([[0.5, 0.7], [0.2, 0.1]])
        labels = np.array([[1, 1], [0, 0]])  # no group-2 cells
        means = region_means(norm, labels)
        assert means.a_g2[0] == 0.0
        assert not means.included_gi[0]

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            region_means(np.zeros((2, 2, 1)), np.zeros((3, 3), dtype=int))


def make_means(a1, a2, bkg, inc_gi=True, inc_ar=True):
    return RegionMeans(
        a_g1=np.array([a1]), a_g2=np.array([a2]), a_bkg=np.array([bkg]),
        included_gi=np.array([inc_gi]), included_ar=np.array([inc_ar]),
    )


class TestGroupingIndex:
    @pytest.mark.parametrize("a1,a2,expect", [
        (0.6, 0.2, 0.5),
        (0.3, 0.3, 0.0),
        (0.5, 0.0, 1.0),
    ])
    def test_spot_values(self, a1, a2, expect):
        assert grouping_index(make_means(a1, a2, 0.1))[0] == pytest.approx(expect)

    def test_excluded_channel_is_contract_violation(self):
        with pytest.raises(ContractViolation):
            grouping_index(make_means(0.0, 0.0, 0.1, inc_gi=False), 0)

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a1, a2 = rng.uniform(0.001, 1.0, 2)
            gi = grouping_index(make_means(a1, a2, 0.5))[0]
            gi_swapped = grouping_index(make_means(a2, a1, 0.5))[0]
            assert gi == pytest.approx(gi_swapped, abs=1e-12)
            assert 0.0 <= gi <= 1.0


class TestAttentionRatio:
    @pytest.mark.parametrize("a1,a2,bkg,expect", [
        (0.4, 0.1, 0.2, 2.0),
        (0.2, 0.2, 0.2, 1.0),
        (0.1, 0.3, 0.6, 0.5),
    ])
    def test_spot_values(self, a1, a2, bkg, expect):
        assert attention_ratio(make_means(a1, a2, bkg))[0] == pytest.approx(expect)

    def test_zero_background_is_contract_violation(self):
        with pytest.raises(ContractViolation):
            attention_ratio(make_means(0.4, 0.1, 0.0, inc_ar=False), 0)


class TestScaleInvariance:
    def test_gi_ar_invariant_to_positive_scaling(self):
        rng = np.random.default_rng(5)
        raw = rng.standard_normal((4, 4, 3))
        labels = rng.integers(0, 3, (4, 4))
        base = score_channels(normalize_channels(raw), labels)
        for lam in (0.01, 3.7, 1000.0):
            scaled = score_channels(normalize_channels(raw * lam), labels)
            for b, s in zip(base, scaled):
                if b.gi is None:
                    assert s.gi is None
                else:
                    assert s.gi == pytest.approx(b.gi, abs=1e-12)
                if b.ar is None:
                    assert s.ar is None
                else:
                    assert s.ar == pytest.approx(b.ar, abs=1e-9)


class TestMonotonicity:
    def test_gi_ar_nondecreasing_in_a_g1(self):
        a2, bkg = 0.3, 0.4
        prev_gi, prev_ar = -1.0, -1.0
        for a1 in np.linspace(a2, 1.0, 50):
            gi = grouping_index(make_means(a1, a2, bkg))[0]
            ar = attention_ratio(make_means(a1, a2, bkg))[0]
            assert gi >= prev_gi - 1e-12 and ar >= prev_ar - 1e-12
            prev_gi, prev_ar = gi, ar


class TestOracleAgreement:
    def test_random_maps_match_bruteforce(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            raw = rng.standard_normal((4, 4, 3)) * rng.uniform(0.1, 10)
            labels = rng.integers(0, 3, (4, 4))
            ours = score_channels(normalize_channels(raw), labels)
            ref = grouping_scores_bruteforce(raw.tolist(), labels.tolist())
            for got, want in zip(ours, ref):
                for key in ("gi", "ar"):
                    got_v = getattr(got, key)
                    want_v = want[key]
                    if want_v is None:
                        assert got_v is None
                    else:
                        assert got_v == pytest.approx(want_v, abs=1e-9)


class TestAggregate:
    def stim(self, gis, block=0, dim="hue", sid="s0"):
        channels = [ChannelScore(i, gi, None) for i, gi in enumerate(gis)]
        return StimulusScores(model_id="m", stimulus_id=sid, block_index=block,
                              feature_dim=dim, channels=channels)

    def test_mean_within_stimulus(self):
        out = aggregate([self.stim([0.2, 0.4])])
        assert out[0].mean_gi == pytest.approx(0.3)
        assert out[0].n_stimuli_gi == 1 and out[0].n_channels_gi == 2

    def test_two_stage_mean(self):
        out = aggregate([self.stim([0.1], sid="a"), self.stim([0.5], sid="b")])
        assert out[0].mean_gi == pytest.approx(0.3)

    def test_all_excluded_gives_null_mean(self):
        out = aggregate([self.stim([None, None])])
        assert out[0].mean_gi is None and out[0].n_stimuli_gi == 0
        assert out[0].n_channels_gi == 0

    def test_mixed_models_rejected(self):
        a = self.stim([0.1])
        b = self.stim([0.2])
        b.model_id = "other"
        with pytest.raises(ContractViolation):
            aggregate([a, b])

    def test_keys_partition_blocks_and_dims(self):
        out = aggregate([
            self.stim([0.1], block=0, dim="hue"),
            self.stim([0.2], block=1, dim="hue"),
            self.stim([0.3], block=0, dim="size"),
        ])
        keys = {(s.block_index, s.feature_dim) for s in out}
        assert keys == {(0, "hue"), (1, "hue"), (0, "size")}
