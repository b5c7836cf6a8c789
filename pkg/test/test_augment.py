import unittest
import numpy as np
from cxrseg import exceptions as exc
from cxrseg.augment import (Sample,
                            AugmentRanges,
                            AugmentParams,
                            apply_augment,
                            draw_augment_params,
                            params_for)
from cxrseg.rasters import complement_mask


def make_sample(rows=21, cols=21, seed=0, weights=True):
    rng = np.random.default_rng(seed)
    image = rng.random((rows, cols)).astype(np.float32)
    lung = (rng.random((rows, cols)) < 0.4).astype(np.float32)
    w = rng.choice([1.0, 2.5, 11.0], size=(rows, cols)).astype(np.float32) if weights else None
    return Sample('s', image, complement_mask(lung), w)


class TestSample(unittest.TestCase):

    def test_shapes_checked(self):
        with self.assertRaises(exc.ShapeMismatchError):
            Sample('bad', np.zeros((4, 4)), np.zeros((4, 5, 2)))

        with self.assertRaises(exc.ShapeMismatchError):
            Sample('bad', np.zeros((4, 4)), np.zeros((4, 4, 2)), np.ones((3, 4)))


class TestParams(unittest.TestCase):

    def test_keyed_draws_repeat(self):
        assert params_for(7, 3, 11) == params_for(7, 3, 11)
        assert params_for(7, 3, 11) != params_for(7, 3, 12)
        assert params_for(7, 3, 11) != params_for(7, 4, 11)

    def test_draws_within_ranges(self):
        ranges = AugmentRanges()
        for ordinal in range(500):
            p = params_for(0, 1, ordinal, ranges)
            assert abs(p.rotation_deg) <= ranges.rotation_deg
            assert abs(p.shear_deg) <= ranges.shear_deg
            assert abs(p.shift_rows) <= ranges.shift_fraction
            assert abs(p.shift_cols) <= ranges.shift_fraction
            assert ranges.scale_min <= p.scale <= ranges.scale_max

    def test_flips_happen_about_half_the_time(self):
        flips = [params_for(0, 1, i).flip_h for i in range(2000)]
        assert 800 < sum(flips) < 1200

    def test_identity_ranges(self):
        p = draw_augment_params(np.random.default_rng(0), AugmentRanges.identity())
        assert p.is_geometric_identity
        assert not p.flip_h and not p.flip_v


class TestApply(unittest.TestCase):

    def test_identity_copies(self):
        sample = make_sample()
        out = apply_augment(sample, AugmentParams())
        np.testing.assert_array_equal(out.image, sample.image)
        np.testing.assert_array_equal(out.masks, sample.masks)
        np.testing.assert_array_equal(out.weights, sample.weights)
        assert out.image is not sample.image

    def test_quarter_turn_is_counterclockwise(self):
        sample = make_sample()
        out = apply_augment(sample, AugmentParams(rotation_deg=90.0))
        np.testing.assert_allclose(out.image, np.rot90(sample.image, 1), atol=1e-5)
        np.testing.assert_array_equal(out.masks, np.rot90(sample.masks, 1, axes=(0, 1)))

    def test_flips(self):
        sample = make_sample()
        out = apply_augment(sample, AugmentParams(flip_h=True))
        np.testing.assert_array_equal(out.image, sample.image[:, ::-1])
        out = apply_augment(sample, AugmentParams(flip_v=True))
        np.testing.assert_array_equal(out.masks, sample.masks[::-1])
        np.testing.assert_array_equal(out.weights, sample.weights[::-1])

    def test_masks_stay_one_hot(self):
        sample = make_sample(30, 26)
        for ordinal in range(20):
            out = apply_augment(sample, params_for(1, 1, ordinal))
            assert set(np.unique(out.masks)) <= {0.0, 1.0}
            np.testing.assert_array_equal(out.masks.sum(axis=-1), 1)
            assert set(np.unique(out.weights)) <= {1.0, 2.5, 11.0}
            assert out.image.shape == (30, 26)
            assert out.image.dtype == np.float32

    def test_same_params_same_output(self):
        sample = make_sample()
        p = params_for(2, 5, 9)
        a, b = apply_augment(sample, p), apply_augment(sample, p)
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.masks, b.masks)

    def test_shift_moves_content(self):
        image = np.zeros((20, 20), dtype=np.float32)
        image[5, 5] = 1
        sample = Sample('dot', image, complement_mask(np.zeros((20, 20))))
        out = apply_augment(sample, AugmentParams(shift_rows=0.1, shift_cols=0.2))
        assert out.image[7, 9] == 1.0

    def test_degenerate_scale(self):
        with self.assertRaises(exc.AugmentError):
            apply_augment(make_sample(), AugmentParams(scale=0.0))

    def test_without_weights(self):
        out = apply_augment(make_sample(weights=False), params_for(0, 1, 0))
        assert out.weights is None

    def test_flip_twice_is_identity(self):
        sample = make_sample()
        p = AugmentParams(flip_h=True)
        out = apply_augment(apply_augment(sample, p), p)
        np.testing.assert_array_equal(out.image, sample.image)
        np.testing.assert_array_equal(out.masks, sample.masks)

    def test_marker_lands_in_image_and_mask_together(self):
        image = np.zeros((24, 24), dtype=np.float32)
        lung = np.zeros((24, 24))
        image[5:8, 6:9] = 1
        lung[5:8, 6:9] = 1
        sample = Sample('marker', image, complement_mask(lung))
        p = AugmentParams(rotation_deg=90.0, shift_rows=0.125, shift_cols=0.125, flip_h=True)
        out = apply_augment(sample, p)
        in_mask = out.masks[..., 1] == 1
        assert in_mask.sum() == 9
        np.testing.assert_array_equal(out.image > 0.5, in_mask)

    def test_image_values_stay_in_range(self):
        sample = make_sample(25, 19, seed=3)
        low, high = sample.image.min(), sample.image.max()
        for ordinal in range(20):
            out = apply_augment(sample, params_for(4, 1, ordinal))
            assert out.image.min() >= low - 1e-6
            assert out.image.max() <= high + 1e-6
