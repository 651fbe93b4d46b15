import numpy as np
import pytest

from xsep.patches import (
    coverage_counts,
    extract_patches,
    grayscale,
    normalize,
    reassemble,
    shuffle_order,
    synth_mix,
)


class TestExtraction:
    def test_documented_patch_count(self):
        # 680x500 at patch 50, overlap 40 (stride 10): 64 x 46 origins.
        img = np.zeros((680, 500))
        grid, patches = extract_patches(img, 50, 40)
        assert grid.count == 2944
        assert patches.shape == (2944, 50, 50)

    def test_single_patch(self):
        grid, patches = extract_patches(np.ones((50, 50)), 50, 45)
        assert grid.count == 1

    def test_exact_tiling_without_overlap(self):
        grid, _ = extract_patches(np.ones((100, 100)), 50, 0)
        assert grid.count == 4
        assert coverage_counts(grid).max() == 1.0

    def test_clamped_final_origin_covers_everything(self):
        grid, _ = extract_patches(np.ones((57, 103)), 50, 45)
        cov = coverage_counts(grid)
        assert cov.min() >= 1.0
        assert grid.origins[-1] == (7, 53)

    def test_row_major_order(self):
        grid, _ = extract_patches(np.ones((60, 60)), 50, 45)
        rows = [r for r, _ in grid.origins]
        assert rows == sorted(rows)

    def test_patch_too_large(self):
        with pytest.raises(ValueError):
            extract_patches(np.ones((40, 60)), 50, 10)

    def test_overlap_range_enforced(self):
        with pytest.raises(ValueError):
            extract_patches(np.ones((60, 60)), 50, 50)


class TestReassembly:
    @pytest.mark.parametrize("shape", [(100, 100), (137, 93)])
    @pytest.mark.parametrize("overlap", [45, 40, 0])
    def test_roundtrip_identity(self, shape, overlap):
        rng = np.random.default_rng(shape[0] + overlap)
        img = rng.random(shape)
        grid, patches = extract_patches(img, 50, overlap)
        assert np.abs(reassemble(grid, patches) - img).max() <= 1e-12

    def test_full_overlap_averages(self):
        grid, _ = extract_patches(np.ones((50, 50)), 50, 45)
        out = reassemble(grid, np.stack([np.full((50, 50), 1.0)]))
        # single patch grid: two stacked manually
        from xsep.patches import PatchGrid

        grid2 = PatchGrid(patch_size=50, stride=5, origins=((0, 0), (0, 0)),
                          source_shape=(50, 50))
        out = reassemble(grid2, np.stack([np.full((50, 50), 1.0),
                                          np.full((50, 50), 3.0)]))
        assert np.allclose(out, 2.0)

    def test_coverage_matches_counting_oracle(self):
        img = np.zeros((100, 100))
        grid, _ = extract_patches(img, 50, 45)
        cov = coverage_counts(grid)
        oracle = np.zeros((100, 100))
        origins = list(range(0, 51, 5))
        for r in origins:
            for c in origins:
                oracle[r : r + 50, c : c + 50] += 1
        assert np.array_equal(cov, oracle)

    def test_count_mismatch_rejected(self):
        grid, patches = extract_patches(np.ones((60, 60)), 50, 40)
        with pytest.raises(ValueError):
            reassemble(grid, patches[:-1])


class TestShuffle:
    def test_single_element(self):
        assert list(shuffle_order(1, 0)) == [0]

    def test_deterministic_per_seed(self):
        assert np.array_equal(shuffle_order(20, 7), shuffle_order(20, 7))
        assert not np.array_equal(shuffle_order(20, 7), shuffle_order(20, 8))

    def test_uniform_over_permutations(self):
        # Histogram over 10^4 shuffles of 4 elements: each of the 24
        # permutations should appear close to uniformly.
        from collections import Counter

        counts = Counter(tuple(shuffle_order(4, seed)) for seed in range(10_000))
        assert len(counts) == 24
        freqs = np.array(list(counts.values())) / 10_000
        assert abs(freqs.mean() - 1 / 24) < 1e-12
        # ~4.6 sigma band for a binomial(1e4, 1/24)
        sigma = np.sqrt((1 / 24) * (23 / 24) / 10_000)
        assert np.abs(freqs - 1 / 24).max() < 4.6 * sigma


class TestGrayscale:
    def test_equal_channels_pass_through(self):
        c = np.full((4, 4), 0.37)
        assert np.allclose(grayscale(np.stack([c, c, c])), 0.37)

    def test_white_is_one(self):
        white = np.ones((3, 4, 4))
        assert np.allclose(grayscale(white), 1.0)

    def test_pure_red_coefficient(self):
        red = np.zeros((3, 4, 4))
        red[0] = 1.0
        assert np.allclose(grayscale(red), 0.299)

    def test_shape_validated(self):
        with pytest.raises(ValueError):
            grayscale(np.ones((4, 4)))


class TestSynthMix:
    def test_zero_second_component(self):
        rng = np.random.default_rng(0)
        x1 = rng.random((5, 5))
        assert np.array_equal(synth_mix(x1, np.zeros((5, 5))), x1)

    def test_constant_sum(self):
        out = synth_mix(np.full((4, 4), 0.2), np.full((4, 4), 0.3))
        assert np.allclose(out, 0.5)

    def test_commutative_bitwise(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((6, 6)), rng.random((6, 6))
        assert np.array_equal(synth_mix(a, b), synth_mix(b, a))

    def test_no_clipping(self):
        out = synth_mix(np.full((3, 3), 0.8), np.full((3, 3), 0.7))
        assert out.max() == pytest.approx(1.5)


class TestNormalize:
    def test_unit_range_unchanged(self):
        img = np.array([[0.0, 0.25], [0.75, 1.0]])
        out, record = normalize(img)
        assert np.array_equal(out, img)
        assert record.scale == 1.0 and record.offset == 0.0

    def test_constant_maps_to_half(self):
        out, record = normalize(np.full((4, 4), 3.0))
        assert np.allclose(out, 0.5)
        assert np.allclose(record.invert(out), 3.0)

    def test_symmetric_range(self):
        out, record = normalize(np.array([[-2.0, 2.0], [0.0, 1.0]]))
        assert out.min() == 0.0 and out.max() == 1.0
        assert out[1, 0] == 0.5  # 0 maps to the midpoint
        assert np.allclose(record.invert(out), [[-2, 2], [0, 1]])

    def test_none_mode(self):
        img = np.array([[3.0, 5.0]])
        out, record = normalize(img, "none")
        assert np.array_equal(out, img)
        assert np.array_equal(record.invert(out), img)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            normalize(np.ones((2, 2)), "zscore")
