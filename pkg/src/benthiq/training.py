"""Epoch loop: stratified batches, augmentation, Dice loss, SGD, validation.

All randomness is derived from (seed, purpose, epoch, item), never from a
shared evolving stream, so resuming from a checkpoint at epoch k replays
exactly the tail of an uninterrupted run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentationConfig, augment_pair
from .data import DEFAULT_BAND, DatasetManifest, class_pixel_counts, plain_batches, stratified_batches
from .errors import ConfigError, TrainingAborted
from .metrics import MetricsReport, confusion_matrix, dice_loss, evaluate_pairs, iou_scores
from .model import BenthiqNet, save_checkpoint
from .rasters import read_image, read_mask
from .tensor import Rng, backward, first_nonfinite, no_grad, sgd_step

_BATCH_DOMAIN = 1
_AUG_DOMAIN = 2


@dataclass
class TrainSettings:
    learning_rate: float
    epochs: int
    batch_size: int = 24
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 1234
    stratify: bool = True
    band: tuple[float, float] = DEFAULT_BAND
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)
    track_train_miou: bool = False
    early_stop_loss: float | None = None
    early_stop_miou: float | None = None


@dataclass
class TrainResult:
    history: list[dict]
    best_epoch: int
    best_val_miou: float
    final_train_loss: float
    stopped_early: bool


def load_split_tiles(manifest: DatasetManifest, split: str,
                     num_classes: int = 4) -> list[tuple[np.ndarray, np.ndarray]]:
    return [
        (read_image(manifest.image_path(e)), read_mask(manifest.mask_path(e), num_classes))
        for e in manifest.subset(split)
    ]


def predict_tiles(model: BenthiqNet, tiles) -> list[tuple[np.ndarray, np.ndarray]]:
    with no_grad():
        return [(model.predict(img), mask) for img, mask in tiles]


def miou_of(model: BenthiqNet, tiles, num_classes: int) -> float:
    pooled = np.zeros((num_classes, num_classes), dtype=np.int64)
    for pred, gt in predict_tiles(model, tiles):
        pooled += confusion_matrix(pred, gt, num_classes)
    return iou_scores(pooled)[1]


def evaluate_model(model: BenthiqNet, tiles) -> tuple[MetricsReport, MetricsReport]:
    """Pooled-confusion and per-tile-mean reports over (image, mask) tiles."""
    return evaluate_pairs(predict_tiles(model, tiles), model.cfg.num_classes)


def train_model(
    model: BenthiqNet,
    manifest: DatasetManifest,
    settings: TrainSettings,
    log_fn=None,
    checkpoint_dir=None,
) -> TrainResult:
    """Train in place from model.epoch up to settings.epochs.

    Saves best-validation and final checkpoints under `checkpoint_dir` when
    given.  `log_fn(epoch, key, value)` receives one call per logged metric.
    """
    n_classes = model.cfg.num_classes
    train_tiles = load_split_tiles(manifest, "train", n_classes)
    val_tiles = load_split_tiles(manifest, "val", n_classes)
    if not train_tiles:
        raise ConfigError("manifest has no training tiles")
    if len(train_tiles) < settings.batch_size:
        raise ConfigError(
            f"batch size {settings.batch_size} exceeds the {len(train_tiles)} training tiles"
        )
    counts = np.stack([class_pixel_counts(mask, n_classes) for _, mask in train_tiles])
    params = list(model.params.values())

    def emit(epoch: int, key: str, value) -> None:
        if log_fn is not None:
            log_fn(epoch, key, value)

    history: list[dict] = []
    best_epoch, best_val = -1, -math.inf
    stopped = False
    final_loss = math.nan
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(model.epoch, settings.epochs):
        batch_rng = Rng(settings.seed).derive(_BATCH_DOMAIN, epoch)
        if settings.stratify:
            batches, fallback = stratified_batches(
                counts, settings.batch_size, batch_rng, settings.band
            )
            if fallback:
                emit(epoch, "stratify_fallback", 1)
        else:
            batches = plain_batches(len(train_tiles), settings.batch_size, batch_rng)
        if not batches:
            raise ConfigError("no full training batch could be formed")

        losses = []
        for bi, batch in enumerate(batches):
            loss = None
            for item in batch:
                img, mask = train_tiles[item]
                if settings.augment.enabled:
                    aug_rng = Rng(settings.seed).derive(_AUG_DOMAIN, epoch, item)
                    img, mask = augment_pair(img, mask, settings.augment, aug_rng)
                item_loss = dice_loss(model.forward(img), mask)
                loss = item_loss if loss is None else loss + item_loss
            loss = loss * (1.0 / len(batch))
            value = loss.item()
            if not math.isfinite(value):
                culprit = first_nonfinite(loss) or "unknown"
                raise TrainingAborted(
                    f"non-finite loss at epoch {epoch}, batch {bi} (first offending op: {culprit})"
                )
            backward(loss)
            sgd_step(params, settings.learning_rate, settings.momentum, settings.weight_decay)
            losses.append(value)

        train_loss = float(np.mean(losses))
        final_loss = train_loss
        model.epoch = epoch + 1
        entry = {"epoch": epoch, "train_dice_loss": train_loss}
        emit(epoch, "train_dice_loss", train_loss)
        if val_tiles:
            val_miou = miou_of(model, val_tiles, n_classes)
            entry["val_miou"] = val_miou
            emit(epoch, "val_miou", val_miou)
            if val_miou > best_val:
                best_val, best_epoch = val_miou, epoch
                if ckpt_dir is not None:
                    save_checkpoint(model, ckpt_dir / "best.ckpt")
        if settings.track_train_miou:
            train_miou = miou_of(model, train_tiles, n_classes)
            entry["train_miou"] = train_miou
            emit(epoch, "train_miou", train_miou)
        history.append(entry)

        if settings.early_stop_loss is not None and train_loss < settings.early_stop_loss:
            need_miou = settings.early_stop_miou
            if need_miou is None or entry.get("train_miou", -math.inf) > need_miou:
                emit(epoch, "early_stop", 1)
                stopped = True
                break

    if ckpt_dir is not None:
        save_checkpoint(model, ckpt_dir / "final.ckpt")
    return TrainResult(history, best_epoch, best_val, final_loss, stopped)
