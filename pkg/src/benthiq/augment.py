"""Paired image/mask augmentations.

Pipeline order: right-angle rotation, flip, fine rotation (+-20 deg),
RGB channel shifts, contrast-then-brightness.  Geometric steps apply the
identical spatial transform to image and mask; photometric steps never
touch the mask.  Each step fires independently with probability 0.5 by
default, so drawing every gate off leaves the pair untouched.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .tensor import Rng


@dataclass(frozen=True)
class AugmentationConfig:
    enabled: bool = True
    apply_prob: float = 0.5
    flip_prob: float = 0.5
    max_rotation_deg: float = 20.0
    rgb_shift_limit: int = 20
    brightness_contrast_limit: float = 0.3


def right_angle_rotate(arr: np.ndarray, quarter_turns: int) -> np.ndarray:
    return np.ascontiguousarray(np.rot90(arr, quarter_turns, axes=(0, 1)))


def flip(arr: np.ndarray, axis: int) -> np.ndarray:
    return np.ascontiguousarray(np.flip(arr, axis=axis))


def fine_rotate(arr: np.ndarray, angle_deg: float, order: int) -> np.ndarray:
    """Rotate around the tile center; out-of-frame samples mirror back in.

    order=1 (bilinear) for images, order=0 (nearest) for label masks so
    labels stay categorical.
    """
    rotated = ndimage.rotate(
        arr.astype(np.float32), angle_deg, axes=(1, 0), reshape=False,
        order=order, mode="reflect",
    )
    return np.clip(np.rint(rotated), 0, 255).astype(np.uint8)


def rgb_shift(img: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    shifted = img.astype(np.int16) + np.asarray(shifts, dtype=np.int16)[None, None, :]
    return np.clip(shifted, 0, 255).astype(np.uint8)


def brightness_contrast(img: np.ndarray, contrast: float, brightness: float) -> np.ndarray:
    """Center at 0, scale by (1+contrast), recenter at 128, add 255*brightness."""
    out = (img.astype(np.float32) - 128.0) * (1.0 + contrast) + 128.0 + 255.0 * brightness
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def augment_pair(
    img: np.ndarray,
    mask: np.ndarray,
    cfg: AugmentationConfig,
    rng: Rng,
) -> tuple[np.ndarray, np.ndarray]:
    if img.shape[:2] != mask.shape:
        raise ValueError(f"image {img.shape[:2]} and mask {mask.shape} extents differ")
    if not cfg.enabled:
        return img, mask

    if rng.random() < cfg.apply_prob:
        k = int(rng.integers(1, 4))                  # 90, 180, or 270 degrees
        img = right_angle_rotate(img, k)
        mask = right_angle_rotate(mask, k)
    if rng.random() < cfg.flip_prob:
        axis = int(rng.integers(0, 2))               # vertical or horizontal
        img = flip(img, axis)
        mask = flip(mask, axis)
    if rng.random() < cfg.apply_prob:
        angle = float(rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg))
        img = fine_rotate(img, angle, order=1)
        mask = fine_rotate(mask, angle, order=0)
    if rng.random() < cfg.apply_prob:
        shifts = rng.integers(-cfg.rgb_shift_limit, cfg.rgb_shift_limit + 1, shape=(3,))
        img = rgb_shift(img, shifts)
    if rng.random() < cfg.apply_prob:
        limit = cfg.brightness_contrast_limit
        contrast = float(rng.uniform(-limit, limit))
        brightness = float(rng.uniform(-limit, limit))
        img = brightness_contrast(img, contrast, brightness)
    return img, mask
