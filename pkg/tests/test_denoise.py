import numpy as np
import pytest

from infigrid import denoise
from infigrid.denoise import (Conditioning, DenoiserSpec, coarse_patch_features,
                              conditioning_for_window)
from infigrid.errors import CoverageError, ShapeError
from infigrid.grid import Region, WindowLayout


def _x(shape=(1, 8, 8), seed=0):
    return np.random.default_rng(seed).normal(size=shape).astype(np.float32)


class TestApply:
    def test_identity_bit_exact(self):
        x = _x()
        out = denoise.apply(DenoiserSpec(kind="identity"), x, None, 1)
        np.testing.assert_array_equal(out, x)
        assert out is not x

    def test_shrink_lambda_one_radius_zero_is_identity(self):
        x = _x()
        spec = DenoiserSpec(kind="shrink_smooth", radius=0, lambdas=(1.0,))
        np.testing.assert_array_equal(denoise.apply(spec, x, None, 1), x)

    def test_shrink_preserves_constants(self):
        x = np.full((1, 8, 8), 2.5, dtype=np.float64)
        spec = DenoiserSpec(kind="shrink_smooth", radius=2, lambdas=(1.0,))
        np.testing.assert_allclose(denoise.apply(spec, x, None, 1), x)

    def test_purity(self):
        x = _x(seed=3)
        spec = DenoiserSpec(kind="shrink_smooth", radius=1, lambdas=(0.7,))
        np.testing.assert_array_equal(denoise.apply(spec, x, None, 2),
                                      denoise.apply(spec, x, None, 2))

    def test_lambda_schedule_last_repeats(self):
        spec = DenoiserSpec(lambdas=(0.9, 0.5))
        assert spec.lambda_for(1) == 0.9
        assert spec.lambda_for(2) == 0.5
        assert spec.lambda_for(7) == 0.5

    def test_translation_equivariance_interior(self):
        rng = np.random.default_rng(4)
        big = rng.normal(size=(1, 12, 12))
        spec = DenoiserSpec(kind="shrink_smooth", radius=1, lambdas=(0.6,))
        a = denoise.apply(spec, big[:, 0:8, 0:8], None, 1)
        b = denoise.apply(spec, big[:, 2:10, 2:10], None, 1)
        np.testing.assert_allclose(a[:, 3:7, 3:7], b[:, 1:5, 1:5], rtol=1e-12)

    def test_cond_affine_zero_mask_degenerates(self):
        x = _x(seed=5)
        y = Conditioning(channels=np.ones((1, 8, 8), dtype=np.float32),
                         mask=np.zeros((8, 8), dtype=np.float32))
        a = denoise.apply(DenoiserSpec(kind="cond_affine", lambdas=(0.4,)), x, y, 1)
        b = denoise.apply(DenoiserSpec(kind="shrink_smooth", lambdas=(0.4,)), x, None, 1)
        np.testing.assert_array_equal(a, b)

    def test_cond_affine_full_mask_copies_target(self):
        x = _x(seed=6)
        target = np.full((1, 8, 8), 9.0, dtype=np.float32)
        y = Conditioning(channels=target, mask=np.ones((8, 8), dtype=np.float32))
        out = denoise.apply(DenoiserSpec(kind="cond_affine", lambdas=(0.4,)), x, y, 1)
        np.testing.assert_allclose(out, target)

    def test_multistep_single_equals_inner(self):
        x = _x(seed=7)
        multi = DenoiserSpec(kind="multistep", inner_kind="shrink_smooth",
                             inner_steps=1, lambda_start=0.3, lambda_end=0.1, radius=1)
        single = DenoiserSpec(kind="shrink_smooth", lambdas=(0.3,), radius=1)
        np.testing.assert_array_equal(denoise.apply(multi, x, None, 1),
                                      denoise.apply(single, x, None, 1))

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            denoise.apply(DenoiserSpec(), np.zeros((8, 8)), None, 1)
        y = Conditioning(channels=np.zeros((1, 4, 4)))
        with pytest.raises(ShapeError):
            denoise.apply(DenoiserSpec(), np.zeros((1, 8, 8)), y, 1)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            DenoiserSpec(kind="resnet")


class TestConditioningForWindow:
    layout = WindowLayout(8, 4)

    def test_constant_parent(self):
        parent_region = Region(-4, -4, 12, 12)
        parent = np.full((1, 12, 12), 5.0, dtype=np.float32)
        y = conditioning_for_window(parent, parent_region, 1, self.layout, (0, 0))
        np.testing.assert_array_equal(y.channels, np.full((1, 8, 8), 5.0))

    def test_all_ones_mask_no_fill(self):
        parent_region = Region(-2, -2, 10, 10)
        parent = np.full((1, 10, 10), 3.0, dtype=np.float32)
        mask = np.ones((10, 10), dtype=np.float32)
        y = conditioning_for_window(parent, parent_region, 1, self.layout, (0, 0),
                                    mask=mask)
        np.testing.assert_array_equal(y.channels, np.full((1, 8, 8), 3.0))
        np.testing.assert_array_equal(y.mask, np.ones((8, 8)))

    def test_noise_fill_is_seed_consistent(self):
        parent_region = Region(0, 0, 8, 8)
        parent = np.full((1, 8, 8), 2.0, dtype=np.float32)
        mask = np.zeros((8, 8), dtype=np.float32)
        a = conditioning_for_window(parent, parent_region, 1, self.layout, (0, 0),
                                    seed=9, mask=mask)
        b = conditioning_for_window(parent, parent_region, 1, self.layout, (0, 0),
                                    seed=9, mask=mask)
        np.testing.assert_array_equal(a.channels, b.channels)
        assert not np.any(a.channels == 2.0)  # holes are noise, never pass-through
        assert not np.any(a.channels == 0.0)  # and never zero-filled

    def test_nearest_neighbor_upsampling(self):
        parent_region = Region(-1, -1, 7, 7)
        parent = np.arange(49, dtype=np.float32).reshape(1, 7, 7)
        y = conditioning_for_window(parent, parent_region, 2, self.layout, (0, 0))
        # window [0,8)^2 on the fine lattice maps to parent [0,4)^2
        expect = np.repeat(np.repeat(parent[:, 1:5, 1:5], 2, axis=-2), 2, axis=-1)
        np.testing.assert_array_equal(y.channels, expect)

    def test_insufficient_coverage_names_region(self):
        parent_region = Region(0, 0, 4, 4)
        parent = np.zeros((1, 4, 4), dtype=np.float32)
        with pytest.raises(CoverageError) as exc:
            conditioning_for_window(parent, parent_region, 1, self.layout, (1, 1))
        assert exc.value.missing == Region(4, 4, 8, 8)

    def test_scalars_carried(self):
        parent = np.zeros((1, 8, 8), dtype=np.float32)
        y = conditioning_for_window(parent, Region(0, 0, 8, 8), 1, self.layout,
                                    (0, 0), scalars=(1.0, 2.5))
        assert y.scalars == (1.0, 2.5)


class TestCoarsePatchFeatures:
    def test_constant_patches(self):
        out = coarse_patch_features(np.full((8, 8), 4.0), 4)
        assert out.shape == (3, 2, 2)
        np.testing.assert_array_equal(out[0], 4.0 * np.ones((2, 2)))
        np.testing.assert_array_equal(out[1], 4.0 * np.ones((2, 2)))
        np.testing.assert_array_equal(out[2], np.ones((2, 2)))

    def test_nearest_rank_percentile(self):
        vals = np.arange(1, 101, dtype=np.float64).reshape(10, 10)
        out = coarse_patch_features(vals, 10)
        assert out[1, 0, 0] == 5.0  # rank ceil(0.05 * 100) = 5 of sorted values
        assert out[0, 0, 0] == 50.5

    def test_output_shape(self):
        out = coarse_patch_features(np.zeros((4, 4)), 2)
        assert out.shape == (3, 2, 2)

    def test_divisibility_error(self):
        with pytest.raises(ShapeError):
            coarse_patch_features(np.zeros((6, 8)), 4)
