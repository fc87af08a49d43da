"""Procedural benthic tile generator.

The real orthomosaic behind the problem is not public, so training data is
synthesized: a smooth value-noise field is thresholded at quantiles to carve
the tile into class regions hitting target area fractions, and each class is
rendered with its own color/texture model.  Sand is bright and smooth, rock
dark and smooth, coral and algae textured and spectrally close to each other
(the hard pair).  Optional shadow and blur patches reproduce the conditions
segmentation models are known to stumble on.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .tensor import Rng

DEFAULT_FRACTIONS = (0.48, 0.23, 0.12, 0.17)

# Per-class rendering model: base RGB, base noise sigma, texture amplitude.
CLASS_RENDER = (
    ((205, 196, 158), 5.0, 6.0),    # sand: bright, low texture
    ((168, 104, 96), 9.0, 34.0),    # coral: warm, strongly textured
    ((116, 128, 84), 9.0, 34.0),    # algae: greenish, strongly textured
    ((74, 76, 82), 5.0, 7.0),       # rock: dark, low texture
)


def value_noise(rng: Rng, height: int, width: int, cell: int) -> np.ndarray:
    """Smooth noise in [0, 1]: random lattice values, bilinear interpolation."""
    gh = height // cell + 2
    gw = width // cell + 2
    lattice = rng.gen.random((gh, gw))
    ys = np.arange(height) / cell
    xs = np.arange(width) / cell
    y0 = ys.astype(np.int64)
    x0 = xs.astype(np.int64)
    ty = (ys - y0)[:, None]
    tx = (xs - x0)[None, :]
    a = lattice[y0][:, x0]
    b = lattice[y0][:, x0 + 1]
    c = lattice[y0 + 1][:, x0]
    d = lattice[y0 + 1][:, x0 + 1]
    return (a * (1 - ty) * (1 - tx) + b * (1 - ty) * tx + c * ty * (1 - tx) + d * ty * tx)


def fractal_noise(rng: Rng, height: int, width: int, base_cell: int, octaves: int = 2) -> np.ndarray:
    out = np.zeros((height, width))
    amp, total = 1.0, 0.0
    cell = base_cell
    for _ in range(octaves):
        out += amp * value_noise(rng, height, width, max(cell, 2))
        total += amp
        amp *= 0.5
        cell //= 2
    return out / total

def mask_from_fractions(rng: Rng, height: int, width: int, fractions) -> np.ndarray:
    """Threshold a smooth field at its own quantiles to hit the target areas."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if (fractions < 0).any() or abs(fractions.sum() - 1.0) > 1e-6:
        raise ConfigError(f"class fractions must be non-negative and sum to 1, got {fractions.tolist()}")
    field = fractal_noise(rng, height, width, base_cell=max(height // 4, 4))
    cuts = np.cumsum(fractions)[:-1]
    thresholds = np.quantile(field, np.clip(cuts, 0.0, 1.0))
    labels = np.searchsorted(thresholds, field, side="left")
    return labels.astype(np.uint8)


def _box_blur3(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge").astype(np.float32)
    out = np.zeros_like(img, dtype=np.float32)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out += padded[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out / 9.0


def render_tile(rng: Rng, mask: np.ndarray, degrade: bool = True) -> np.ndarray:
    """Render an RGB image for a class mask with per-class color/texture."""
    h, w = mask.shape
    img = np.zeros((h, w, 3), dtype=np.float32)
    texture = fractal_noise(rng, h, w, base_cell=8, octaves=2) - 0.5
    for cls, (base, sigma, tex_amp) in enumerate(CLASS_RENDER):
        sel = mask == cls
        if not sel.any():
            continue
        block = np.array(base, dtype=np.float32)
        noise = rng.gen.normal(0.0, sigma, size=(int(sel.sum()), 3))
        img[sel] = block + noise + tex_amp * texture[sel][:, None]
    if degrade and rng.gen.random() < 0.35:
        # one degraded patch per affected tile: soft shadow or local blur
        cy, cx = rng.gen.integers(0, h), rng.gen.integers(0, w)
        radius = int(rng.gen.integers(h // 8, h // 3 + 1))
        yy, xx = np.ogrid[:h, :w]
        dist2 = (yy - cy) ** 2 + (xx - cx) ** 2
        patch = dist2 <= radius * radius
        if rng.gen.random() < 0.5:
            falloff = np.exp(-dist2 / (2.0 * (radius * 0.7) ** 2)).astype(np.float32)
            img *= (1.0 - 0.45 * falloff)[:, :, None]
        else:
            blurred = _box_blur3(_box_blur3(img))
            img[patch] = blurred[patch]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_tile(rng: Rng, fractions=DEFAULT_FRACTIONS, size: int = 224,
                  degrade: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """One (image, mask) pair; fully determined by the rng seed and arguments."""
    mask = mask_from_fractions(rng, size, size, fractions)
    image = render_tile(rng, mask, degrade=degrade)
    return image, mask


def jitter_fractions(rng: Rng, fractions, spread: float = 0.08) -> np.ndarray:
    """Per-tile composition wobble around the dataset target, renormalized."""
    base = np.asarray(fractions, dtype=np.float64)
    noisy = np.maximum(base + rng.gen.uniform(-spread, spread, size=base.shape), 0.0)
    zero = base <= 0.0
    noisy[zero] = 0.0
    if noisy.sum() <= 0:
        return base
    return noisy / noisy.sum()
