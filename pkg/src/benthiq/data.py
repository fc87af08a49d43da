"""Dataset manifests, deterministic splitting, and stratified batching.

A manifest is a line-oriented text file: comment headers carrying the
generator seed and target class fractions, then tab-separated rows of
image path, mask path, and split tag.  Paths are stored relative to the
manifest file.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .tensor import Rng

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
DEFAULT_SPLIT_PERCENTS = (75, 15, 10)
DEFAULT_BAND = (0.20, 0.40)


@dataclass
class ManifestEntry:
    image: str
    mask: str
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    seed: int = 0
    fractions: tuple[float, ...] | None = None
    root: Path = Path(".")

    def subset(self, split: str) -> list[ManifestEntry]:
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}, expected one of {SPLITS}")
        return [e for e in self.entries if e.split == split]

    def image_path(self, entry: ManifestEntry) -> Path:
        p = Path(entry.image)
        return p if p.is_absolute() else self.root / p

    def mask_path(self, entry: ManifestEntry) -> Path:
        p = Path(entry.mask)
        return p if p.is_absolute() else self.root / p

    def write(self, path) -> None:
        path = Path(path)
        lines = ["# benthiq dataset manifest", f"# seed = {self.seed}"]
        if self.fractions is not None:
            lines.append("# fractions = " + ",".join(f"{f:.4f}" for f in self.fractions))
        lines += [f"{e.image}\t{e.mask}\t{e.split}" for e in self.entries]
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        man = cls(root=path.parent)
        seen: set[str] = set()
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.rstrip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if body.startswith("seed"):
                    man.seed = int(body.split("=", 1)[1])
                elif body.startswith("fractions"):
                    man.fractions = tuple(float(v) for v in body.split("=", 1)[1].split(","))
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ConfigError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            image, mask, split = parts
            if split not in SPLITS:
                raise ConfigError(f"{path}:{lineno}: unknown split tag {split!r}")
            for p in (image, mask):
                if p in seen:
                    raise ConfigError(f"{path}:{lineno}: duplicate path {p!r}")
                seen.add(p)
            man.entries.append(ManifestEntry(image, mask, split))
        return man


def split_counts(n: int, percents=DEFAULT_SPLIT_PERCENTS) -> tuple[int, int, int]:
    """Item counts per split: half-up rounding, each split kept non-empty."""
    if sum(percents) != 100:
        raise ConfigError(f"split percents must sum to 100, got {percents}")
    if n < len(SPLITS):
        raise ConfigError(f"need at least {len(SPLITS)} items to split, got {n}")
    train = int(np.floor(n * percents[0] / 100 + 0.5))
    val = int(np.floor(n * percents[1] / 100 + 0.5))
    test = n - train - val
    counts = [train, val, test]
    for i in range(3):
        while counts[i] < 1:
            counts[int(np.argmax(counts))] -= 1
            counts[i] += 1
    return tuple(counts)


def split_dataset(entries: list[ManifestEntry], rng: Rng,
                  percents=DEFAULT_SPLIT_PERCENTS) -> None:
    """Seeded shuffle then contiguous split assignment, in place."""
    counts = split_counts(len(entries), percents)
    order = rng.permutation(len(entries))
    tags = []
    for split, c in zip(SPLITS, counts):
        tags += [split] * c
    for idx, tag in zip(order, tags):
        entries[int(idx)].split = tag


def class_pixel_counts(mask: np.ndarray, num_classes: int = 4) -> np.ndarray:
    return np.bincount(mask.reshape(-1).astype(np.int64), minlength=num_classes)


def batch_fractions(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    return counts.sum(axis=0) / total if counts.ndim > 1 else counts / total


def plain_batches(n_items: int, batch_size: int, rng: Rng) -> list[list[int]]:
    """Shuffled full batches; a trailing partial batch is dropped."""
    order = [int(i) for i in rng.permutation(n_items)]
    return [order[i : i + batch_size] for i in range(0, n_items - batch_size + 1, batch_size)]


def stratified_batches(
    counts: np.ndarray,
    batch_size: int,
    rng: Rng,
    band: tuple[float, float] = DEFAULT_BAND,
    max_attempts: int | None = None,
) -> tuple[list[list[int]], bool]:
    """Accept/reject shuffled candidate batches on aggregate class abundance.

    A candidate batch passes when every class's pixel fraction over the
    whole batch lies inside `band`.  Rejected candidates return their tiles
    to the pool for later draws.  When the attempt budget runs out the
    remainder falls back to unfiltered batches, with a logged warning —
    never silently.  Returns (batches, fallback_used).
    """
    n = counts.shape[0]
    lo, hi = band
    if max_attempts is None:
        max_attempts = 50 * max(1, n // batch_size)
    pool = [int(i) for i in rng.permutation(n)]
    accepted: list[list[int]] = []
    attempts = 0
    while len(pool) >= batch_size and attempts < max_attempts:
        candidate = pool[:batch_size]
        frac = batch_fractions(counts[candidate])
        attempts += 1
        if ((frac >= lo - 1e-12) & (frac <= hi + 1e-12)).all():
            accepted.append(candidate)
            pool = pool[batch_size:]
        else:
            pool = [int(i) for i in np.array(pool)[rng.permutation(len(pool))]]
    if len(pool) >= batch_size and attempts >= max_attempts:
        log.warning(
            "stratified batching: band [%.2f, %.2f] unreachable for %d remaining tiles "
            "after %d attempts; falling back to unfiltered batches",
            lo, hi, len(pool), attempts,
        )
        fallback = [pool[i : i + batch_size] for i in range(0, len(pool) - batch_size + 1, batch_size)]
        return accepted + fallback, True
    return accepted, False
