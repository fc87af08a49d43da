import numpy as np
import pytest

from benthiq.errors import ConfigError
from benthiq.synth import (
    CLASS_RENDER,
    generate_tile,
    jitter_fractions,
    mask_from_fractions,
    render_tile,
    value_noise,
)
from benthiq.tensor import Rng


class TestMaskGeneration:
    def test_degenerate_target_gives_uniform_sand(self):
        mask = mask_from_fractions(Rng(1), 32, 32, (1.0, 0.0, 0.0, 0.0))
        assert (mask == 0).all()

    def test_paper_composition_within_tolerance(self):
        mask = mask_from_fractions(Rng(1234), 224, 224, (0.48, 0.23, 0.12, 0.17))
        frac = np.bincount(mask.ravel(), minlength=4) / mask.size
        np.testing.assert_allclose(frac, (0.48, 0.23, 0.12, 0.17), atol=0.10)

    def test_regions_are_contiguous_not_noise(self):
        # a smooth field should give far fewer border pixels than label noise
        from benthiq.metrics import border_mask
        mask = mask_from_fractions(Rng(3), 64, 64, (0.25,) * 4)
        assert border_mask(mask).mean() < 0.5

    def test_invalid_fractions_rejected(self):
        with pytest.raises(ConfigError):
            mask_from_fractions(Rng(0), 16, 16, (0.5, 0.5, 0.5, 0.5))
        with pytest.raises(ConfigError):
            mask_from_fractions(Rng(0), 16, 16, (-0.1, 0.6, 0.3, 0.2))


class TestTileGeneration:
    def test_same_seed_same_tile_bit_exact(self):
        a_img, a_mask = generate_tile(Rng(1234), size=64)
        b_img, b_mask = generate_tile(Rng(1234), size=64)
        np.testing.assert_array_equal(a_img, b_img)
        np.testing.assert_array_equal(a_mask, b_mask)

    def test_different_seeds_differ(self):
        a_img, _ = generate_tile(Rng(1), size=64)
        b_img, _ = generate_tile(Rng(2), size=64)
        assert not np.array_equal(a_img, b_img)

    def test_image_and_mask_extents_match(self):
        img, mask = generate_tile(Rng(5), size=96)
        assert img.shape == (96, 96, 3) and mask.shape == (96, 96)
        assert img.dtype == np.uint8 and mask.dtype == np.uint8

    def test_class_render_statistics(self):
        # sand renders bright and smooth, rock dark and smooth; coral and
        # algae are the spectrally-closest pair
        img, mask = generate_tile(Rng(8), (0.25,) * 4, size=128, degrade=False)
        means = np.array([img[mask == k].mean(axis=0) for k in range(4)])
        stds = np.array([img[mask == k].std() for k in range(4)])
        assert means[0].mean() > 150          # sand bright
        assert means[3].mean() < 110          # rock dark
        assert stds[1] > stds[0] and stds[2] > stds[3]   # hard substrates textured
        gaps = {
            (i, j): np.linalg.norm(means[i] - means[j])
            for i in range(4) for j in range(i + 1, 4)
        }
        assert min(gaps, key=gaps.get) == (1, 2)          # coral vs algae closest

    def test_value_noise_in_unit_range(self):
        field = value_noise(Rng(9), 40, 40, 8)
        assert field.min() >= 0.0 and field.max() <= 1.0


class TestJitter:
    def test_zero_classes_stay_zero(self):
        out = jitter_fractions(Rng(3), (0.5, 0.5, 0.0, 0.0))
        assert out[2] == 0.0 and out[3] == 0.0
        np.testing.assert_allclose(out.sum(), 1.0)

    def test_stays_near_target_and_normalized(self):
        samples = np.stack([jitter_fractions(Rng(100 + i), (0.48, 0.23, 0.12, 0.17))
                            for i in range(200)])
        np.testing.assert_allclose(samples.sum(axis=1), 1.0)
        np.testing.assert_allclose(samples.mean(axis=0), (0.48, 0.23, 0.12, 0.17), atol=0.03)
