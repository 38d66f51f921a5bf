import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flimsod.core import (
    EPS_STD,
    ChannelStats,
    FeatureMap,
    adjacency_offsets,
    convolve,
    extract_patch,
    extract_patches,
    normalize_patch,
    pool,
    relu,
    zscore_stats,
)
from flimsod.encoder import KernelBank
from flimsod import imgio

from oracles import naive_conv, naive_pool


def make_bank(kernels, k, d=1, biases=None):
    kernels = np.atleast_2d(kernels)
    return KernelBank(kernels=kernels, labels=np.ones(len(kernels), dtype=int),
                      k=k, d=d, biases=biases)


class TestAdjacencyOffsets:
    def test_k3_d1(self):
        offs = adjacency_offsets(3, 1)
        assert offs == [(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0),
                        (-1, 1), (0, 1), (1, 1)]

    def test_single_pixel_window(self):
        assert adjacency_offsets(1, 3) == [(0, 0)]

    def test_dilation_two(self):
        offs = adjacency_offsets(3, 2)
        assert set(offs) == {(dx, dy) for dx in (-2, 0, 2) for dy in (-2, 0, 2)}
        assert len(offs) == 9

    @pytest.mark.parametrize("k", [0, 2, 4, -3])
    def test_invalid_k(self, k):
        with pytest.raises(ValueError):
            adjacency_offsets(k, 1)

    def test_invalid_dilation(self):
        with pytest.raises(ValueError):
            adjacency_offsets(3, 0)

    @given(k=st.sampled_from([1, 3, 5, 7]), d=st.integers(1, 4))
    def test_count_and_negation_symmetry(self, k, d):
        offs = adjacency_offsets(k, d)
        assert len(offs) == k * k
        assert len(set(offs)) == k * k
        assert {(-dx, -dy) for dx, dy in offs} == set(offs)


class TestExtractPatch:
    def test_constant_map(self):
        fm = FeatureMap(np.full((6, 6, 2), 3.5))
        p = extract_patch(fm, (3, 3), 3)
        assert p.values.shape == (18,)
        assert np.all(p.values == 3.5)

    def test_component_order(self):
        fm = FeatureMap(np.arange(1.0, 10.0).reshape(3, 3, 1))
        p = extract_patch(fm, (1, 1), 3, 1)
        assert np.array_equal(p.values, np.arange(1.0, 10.0))

    def test_corner_zero_fill(self):
        fm = FeatureMap(np.arange(1.0, 10.0).reshape(3, 3, 1))
        p = extract_patch(fm, (0, 0), 3)
        assert int((p.values == 0).sum()) == 5
        assert np.array_equal(p.values, [0, 0, 0, 0, 1, 2, 0, 4, 5])

    def test_channels_innermost(self):
        data = np.zeros((3, 3, 2))
        data[:, :, 0] = np.arange(9).reshape(3, 3)
        data[:, :, 1] = np.arange(9).reshape(3, 3) + 100
        p = extract_patch(FeatureMap(data), (1, 1), 3)
        assert np.array_equal(p.values[:4], [0, 100, 1, 101])

    def test_outside_domain(self):
        fm = FeatureMap(np.zeros((3, 3, 1)))
        with pytest.raises(ValueError):
            extract_patch(fm, (3, 0), 3)


class TestZscore:
    def test_two_patches(self):
        stats = zscore_stats(np.array([[1.0, 3.0], [3.0, 1.0]]))
        assert np.allclose(stats.mean, [2.0, 2.0])
        assert np.allclose(stats.std, [1.0, 1.0])

    def test_single_patch_floors_std(self):
        stats = zscore_stats(np.array([[4.0, -2.0, 0.0]]))
        assert np.all(stats.std == EPS_STD)

    def test_matches_two_pass_oracle(self, rng):
        patches = rng.normal(size=(5, 12))
        stats = zscore_stats(patches)
        # independent two-pass mean/population-variance computation
        mean = np.array([sum(patches[:, j]) / 5 for j in range(12)])
        var = np.array([sum((patches[:, j] - mean[j]) ** 2) / 5 for j in range(12)])
        assert np.allclose(stats.mean, mean, atol=1e-9)
        assert np.allclose(stats.std, np.sqrt(var), atol=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            zscore_stats(np.zeros((0, 4)))


class TestNormalizePatch:
    def test_mean_patch_goes_to_zero(self):
        stats = ChannelStats(mean=np.array([1.0, 2.0]), std=np.array([3.0, 4.0]))
        assert np.allclose(normalize_patch(np.array([1.0, 2.0]), stats), 0.0)

    def test_identity_stats(self, rng):
        v = rng.normal(size=8)
        stats = ChannelStats(mean=np.zeros(8), std=np.ones(8))
        assert np.allclose(normalize_patch(v, stats), v)
        # idempotent under identity stats
        assert np.allclose(normalize_patch(normalize_patch(v, stats), stats), v)

    def test_length_mismatch(self):
        stats = ChannelStats(mean=np.zeros(4), std=np.ones(4))
        with pytest.raises(ValueError):
            normalize_patch(np.zeros(5), stats)

    def test_normalized_set_is_standardized(self, rng):
        patches = rng.normal(loc=3.0, scale=2.5, size=(40, 9))
        stats = zscore_stats(patches)
        normed = normalize_patch(patches, stats)
        assert np.all(np.abs(normed.mean(axis=0)) <= 1e-6)
        assert np.all(np.abs(normed.std(axis=0) - 1.0) <= 1e-6)


class TestConvolve:
    def test_identity_kernel(self, rng):
        data = rng.normal(size=(7, 5, 1))
        ker = np.zeros(9)
        ker[4] = 1.0
        out = convolve(FeatureMap(data), make_bank(ker, 3))
        assert np.allclose(out.data[:, :, 0], data[:, :, 0])

    def test_all_ones_on_constant(self):
        fm = FeatureMap(np.full((6, 6, 1), 2.0))
        out = convolve(fm, make_bank(np.ones(9), 3))
        assert np.allclose(out.data[1:-1, 1:-1, 0], 18.0)

    def test_matches_naive_oracle(self, rng):
        data = rng.normal(size=(5, 5, 2))
        kernels = rng.normal(size=(3, 18))
        biases = rng.normal(size=3)
        out = convolve(FeatureMap(data), make_bank(kernels, 3, biases=biases))
        expected = naive_conv(data, kernels, biases, 3, 1, 1)
        assert np.max(np.abs(out.data - expected)) < 1e-9

    def test_dilation_and_stride_match_oracle(self, rng):
        data = rng.normal(size=(9, 8, 3))
        kernels = rng.normal(size=(2, 27))
        biases = np.zeros(2)
        out = convolve(FeatureMap(data), make_bank(kernels, 3, d=2), stride=2)
        expected = naive_conv(data, kernels, biases, 3, 2, 2)
        assert out.data.shape == expected.shape == (5, 4, 2)
        assert out.scale == 2
        assert np.max(np.abs(out.data - expected)) < 1e-9

    def test_depth_mismatch(self):
        fm = FeatureMap(np.zeros((4, 4, 2)))
        with pytest.raises(ValueError):
            convolve(fm, make_bank(np.ones(9), 3))

    def test_cauchy_schwarz_bound(self, rng):
        data = rng.normal(size=(6, 6, 2))
        ker = rng.normal(size=18)
        ker /= np.linalg.norm(ker)
        fm = FeatureMap(data)
        out = convolve(fm, make_bank(ker, 3))
        pixels = [(x, y) for y in range(6) for x in range(6)]
        norms = np.linalg.norm(extract_patches(fm, pixels, 3), axis=1)
        assert np.all(np.abs(out.data[:, :, 0].ravel(order="C"))
                      <= norms.reshape(6, 6).ravel() + 1e-12)


class TestReluPool:
    def test_relu(self):
        fm = FeatureMap(np.array([[-1.0, 0.0, 2.0]])[:, :, None])
        assert np.array_equal(relu(fm).data.ravel(), [0.0, 0.0, 2.0])

    def test_maxpool_2x2(self):
        fm = FeatureMap(np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None])
        out = pool(fm, "max", 2, 2)
        assert out.data.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == 4.0
        assert out.scale == 2

    def test_avgpool_matches_naive(self, rng):
        data = rng.normal(size=(7, 6, 3))
        out = pool(FeatureMap(data), "avg", 3, 1)
        expected = naive_pool(data, 3, 1, "avg")
        assert np.max(np.abs(out.data - expected)) < 1e-9

    def test_maxpool_matches_naive(self, rng):
        data = rng.normal(size=(7, 6, 2))
        out = pool(FeatureMap(data), "max", 3, 2)
        expected = naive_pool(data, 3, 2, "max")
        assert np.max(np.abs(out.data - expected)) < 1e-9

    def test_max_dominates_avg_on_nonnegative(self, rng):
        data = np.abs(rng.normal(size=(8, 8, 2)))
        mx = pool(FeatureMap(data), "max", 3, 2)
        av = pool(FeatureMap(data), "avg", 3, 2)
        assert np.all(mx.data >= av.data - 1e-12)

    def test_scale_accumulates(self):
        fm = FeatureMap(np.zeros((8, 8, 1)), scale=2)
        assert pool(fm, "max", 3, 2).scale == 4


class TestFeatureMap:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            FeatureMap(np.array([[np.nan]])[:, :, None])

    def test_rejects_bad_scale(self):
        with pytest.raises(ValueError):
            FeatureMap(np.zeros((2, 2, 1)), scale=0)

    def test_immutable(self):
        fm = FeatureMap(np.zeros((2, 2, 1)))
        with pytest.raises(ValueError):
            fm.data[0, 0, 0] = 1.0


class TestIO:
    def test_feature_map_container_roundtrip(self, tmp_path, rng):
        fm = FeatureMap(rng.normal(size=(5, 7, 3)), scale=2)
        path = tmp_path / "map.bin"
        imgio.write_feature_map(path, fm)
        back = imgio.read_feature_map(path)
        assert back.scale == 2
        assert np.array_equal(back.data, fm.data)
        # header is four little-endian uint32: width, height, channels, scale
        header = np.frombuffer(path.read_bytes()[:16], dtype="<u4")
        assert list(header) == [7, 5, 3, 2]

    def test_png_roundtrip(self, tmp_path, rng):
        values = rng.random((9, 11))
        path = tmp_path / "sal.png"
        imgio.save_gray(path, values)
        back = imgio.load_image(path)
        assert back.channels == 1
        assert np.max(np.abs(back.data[:, :, 0] - values)) <= 0.5 / 255 + 1e-12

    def test_mask_roundtrip(self, tmp_path, rng):
        mask = rng.random((6, 6)) > 0.5
        path = tmp_path / "mask.png"
        imgio.save_mask(path, mask)
        assert np.array_equal(imgio.load_mask(path), mask)


@pytest.mark.skipif(not __import__("flimsod.accel", fromlist=["HAS_NUMBA"]).HAS_NUMBA,
                    reason="numba not installed")
class TestKernelPathsAgree:
    """The compiled and numpy builds must agree to float64 round-off."""

    def test_conv(self, rng):
        from flimsod.kernels import _conv_bank_numba, _conv_bank_numpy

        data = rng.normal(size=(11, 9, 3))
        kernels = rng.normal(size=(4, 27))
        biases = rng.normal(size=4)
        a = _conv_bank_numba(data, kernels, biases, 3, 1, 2)
        b = _conv_bank_numpy(data, kernels, biases, 3, 1, 2)
        assert np.max(np.abs(a - b)) < 1e-10

    def test_pool(self, rng):
        from flimsod.kernels import _pool_numba, _pool_numpy

        data = rng.normal(size=(10, 13, 2))
        for kind in (0, 1):
            a = _pool_numba(data, 3, 2, kind)
            b = _pool_numpy(data, 3, 2, kind)
            assert np.max(np.abs(a - b)) < 1e-12

    def test_forest(self, rng):
        from flimsod.kernels import _grow_forest_numba, _grow_forest_python

        colors = rng.random((12, 14, 3))
        seed_idx = np.array([5, 100, 150], dtype=np.int64)
        seed_labels = np.array([1, 2, 1], dtype=np.int64)
        la, ca = _grow_forest_numba(colors, seed_idx, seed_labels)
        lb, cb = _grow_forest_python(colors, seed_idx, seed_labels)
        assert np.array_equal(la, lb)
        assert np.allclose(ca, cb, atol=0, rtol=0)
