import numpy as np
import pytest

from benthiq import ModelConfig, Rng
from benthiq.data import DatasetManifest, ManifestEntry
from benthiq.rasters import write_image, write_mask
from benthiq.synth import generate_tile, jitter_fractions

MICRO = ModelConfig(
    embed_dim=8, depths=(2, 2, 2, 2), heads=(2, 4, 8, 16),
    window_size=2, input_size=64, variant="custom",
)


@pytest.fixture
def micro_config():
    return MICRO


def make_dataset(root, splits, seed=7, size=64, fractions=(0.25, 0.25, 0.25, 0.25)):
    """Write a synthetic dataset with the given split tags; returns the manifest."""
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    man = DatasetManifest(seed=seed, fractions=tuple(fractions), root=root)
    for i, split in enumerate(splits):
        rng = Rng(seed).derive(10, i)
        img, mask = generate_tile(rng, jitter_fractions(rng, fractions), size=size)
        write_image(root / f"images/t{i:03d}.ppm", img)
        write_mask(root / f"masks/t{i:03d}.pgm", mask)
        man.entries.append(ManifestEntry(f"images/t{i:03d}.ppm", f"masks/t{i:03d}.pgm", split))
    man.write(root / "manifest.tsv")
    return man


def random_image(seed: int, size: int = 64) -> np.ndarray:
    return Rng(seed).gen.integers(0, 256, size=(size, size, 3)).astype(np.uint8)


def random_mask(seed: int, size: int = 64, classes: int = 4) -> np.ndarray:
    return Rng(seed).gen.integers(0, classes, size=(size, size)).astype(np.uint8)
