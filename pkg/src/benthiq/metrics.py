"""Dice training loss and the evaluation suite: per-class IOU, mIOU,
border/interior accuracy, confusion matrices, error maps.

Masks are uint8 [H, W] class-id rasters; class ids 0..N-1 are
sand, coral, algae, rock for the default 4-class problem.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError, EmptyRegionError
from .tensor import Tensor

DICE_EPS = 1e-5

CLASS_NAMES = ("sand", "coral", "algae", "rock")


def class_names(n: int) -> tuple[str, ...]:
    if n == len(CLASS_NAMES):
        return CLASS_NAMES
    return tuple(f"class{i}" for i in range(n))


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    flat = labels.reshape(-1).astype(np.int64)
    if flat.min() < 0 or flat.max() >= num_classes:
        raise DimensionError(f"labels outside [0, {num_classes}): {flat.min()}..{flat.max()}")
    out = np.zeros((flat.size, num_classes), dtype=np.float32)
    out[np.arange(flat.size), flat] = 1.0
    return out


def dice_loss(logits: Tensor, gt: np.ndarray) -> Tensor:
    """1 - mean per-class Dice between softmax probabilities and one-hot gt.

    dice_c = (2*sum(p_c*g_c) + eps) / (sum(p_c) + sum(g_c) + eps); the
    smoothing keeps absent classes from contributing 0/0.  Differentiable,
    with values in [0, 1].
    """
    h, w, n = logits.shape
    if gt.shape != (h, w):
        raise DimensionError(f"logits {h}x{w} vs ground truth {gt.shape}")
    g = Tensor(one_hot(gt, n))                       # [H*W, N], constant
    p = T.softmax(logits.reshape(h * w, n), axis=1)
    inter = (p * g).sum(axis=0)                      # [N]
    denom = p.sum(axis=0) + g.data.sum(axis=0)
    dice = (2.0 * inter + DICE_EPS) / (denom + DICE_EPS)
    return 1.0 - dice.mean()


def confusion_matrix(pred: np.ndarray, gt: np.ndarray, num_classes: int = 4) -> np.ndarray:
    """counts[i, j] = number of pixels with gt class i predicted as class j."""
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    gt_flat = gt.reshape(-1).astype(np.int64)
    pred_flat = pred.reshape(-1).astype(np.int64)
    for name, arr in (("gt", gt_flat), ("pred", pred_flat)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise DimensionError(f"{name} labels outside [0, {num_classes})")
    counts = np.bincount(gt_flat * num_classes + pred_flat, minlength=num_classes**2)
    return counts.reshape(num_classes, num_classes)


def iou_scores(confusion: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-class IOU and their mean, on the 0-100 scale.

    Classes absent from both ground truth and prediction carry no IOU
    (NaN) and are excluded from the mean.
    """
    if confusion.sum() == 0:
        raise ContractError("iou_scores on an empty confusion matrix")
    tp = np.diag(confusion).astype(np.float64)
    gt_total = confusion.sum(axis=1).astype(np.float64)
    pred_total = confusion.sum(axis=0).astype(np.float64)
    union = gt_total + pred_total - tp
    per_class = np.full(confusion.shape[0], np.nan)
    present = union > 0
    per_class[present] = 100.0 * tp[present] / union[present]
    return per_class, float(np.nanmean(per_class))


def border_mask(gt: np.ndarray) -> np.ndarray:
    """True where any 4-neighbor has a different label.

    A label transition marks both adjacent pixels, so the band along every
    boundary is two pixels wide.
    """
    border = np.zeros(gt.shape, dtype=bool)
    diff_v = gt[1:, :] != gt[:-1, :]
    border[1:, :] |= diff_v
    border[:-1, :] |= diff_v
    diff_h = gt[:, 1:] != gt[:, :-1]
    border[:, 1:] |= diff_h
    border[:, :-1] |= diff_h
    return border


def region_accuracy(pred: np.ndarray, gt: np.ndarray, region: np.ndarray) -> float:
    """Pixel accuracy restricted to `region`, 0-100 scale."""
    if pred.shape != gt.shape or region.shape != gt.shape:
        raise DimensionError("region accuracy needs equal extents")
    total = int(region.sum())
    if total == 0:
        raise EmptyRegionError("accuracy over an empty region is undefined")
    correct = int(((pred == gt) & region).sum())
    return 100.0 * correct / total


def error_map(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Boolean raster of pixel-wise mismatches."""
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    return pred != gt


@dataclass
class MetricsReport:
    """Evaluation summary; accuracies are None when the region is empty."""

    num_classes: int
    per_class_iou: np.ndarray
    miou: float
    border_accuracy: float | None
    interior_accuracy: float | None
    confusion: np.ndarray
    pixel_counts: np.ndarray

    def to_lines(self, prefix: str = "") -> list[str]:
        pre = f"{prefix}." if prefix else ""
        names = class_names(self.num_classes)
        lines = [f"{pre}num_classes = {self.num_classes}"]
        lines.append(f"{pre}miou = {self.miou:.2f}")
        for i, name in enumerate(names):
            v = self.per_class_iou[i]
            lines.append(f"{pre}iou.{name} = " + ("absent" if np.isnan(v) else f"{v:.2f}"))
        for label, v in (("border_accuracy", self.border_accuracy),
                         ("interior_accuracy", self.interior_accuracy)):
            lines.append(f"{pre}{label} = " + ("absent" if v is None else f"{v:.2f}"))
        for i, name in enumerate(names):
            lines.append(f"{pre}pixels.{name} = {int(self.pixel_counts[i])}")
        for i in range(self.num_classes):
            row = ",".join(str(int(v)) for v in self.confusion[i])
            lines.append(f"{pre}confusion.{names[i]} = {row}")
        return lines


def report_from_confusion(
    confusion: np.ndarray,
    border_correct: int,
    border_total: int,
    interior_correct: int,
    interior_total: int,
) -> MetricsReport:
    per_class, miou = iou_scores(confusion)
    return MetricsReport(
        num_classes=confusion.shape[0],
        per_class_iou=per_class,
        miou=miou,
        border_accuracy=100.0 * border_correct / border_total if border_total else None,
        interior_accuracy=100.0 * interior_correct / interior_total if interior_total else None,
        confusion=confusion,
        pixel_counts=confusion.sum(axis=1),
    )


def evaluate_pairs(pairs, num_classes: int = 4) -> tuple[MetricsReport, MetricsReport]:
    """Score (pred, gt) mask pairs two ways: pooled confusion across all
    pixels, and the mean of per-tile scores.  Returns (pooled, per_tile)."""
    pooled = np.zeros((num_classes, num_classes), dtype=np.int64)
    b_corr = b_tot = i_corr = i_tot = 0
    tile_miou: list[float] = []
    tile_border: list[float] = []
    tile_interior: list[float] = []
    count = 0
    for pred, gt in pairs:
        count += 1
        cm = confusion_matrix(pred, gt, num_classes)
        pooled += cm
        _, miou = iou_scores(cm)
        tile_miou.append(miou)
        border = border_mask(gt)
        interior = ~border
        nb, ni = int(border.sum()), int(interior.sum())
        correct = pred == gt
        b_corr += int((correct & border).sum())
        b_tot += nb
        i_corr += int((correct & interior).sum())
        i_tot += ni
        if nb:
            tile_border.append(region_accuracy(pred, gt, border))
        if ni:
            tile_interior.append(region_accuracy(pred, gt, interior))
    if count == 0:
        raise ContractError("evaluate_pairs needs at least one tile")
    pooled_report = report_from_confusion(pooled, b_corr, b_tot, i_corr, i_tot)
    per_class, _ = iou_scores(pooled)
    per_tile = MetricsReport(
        num_classes=num_classes,
        per_class_iou=per_class,
        miou=float(np.mean(tile_miou)),
        border_accuracy=float(np.mean(tile_border)) if tile_border else None,
        interior_accuracy=float(np.mean(tile_interior)) if tile_interior else None,
        confusion=pooled,
        pixel_counts=pooled.sum(axis=1),
    )
    return pooled_report, per_tile
