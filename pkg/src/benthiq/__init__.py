"""Benthic-tile semantic segmentation: a U-shaped windowed-attention network
on a minimal numpy autodiff engine, with its training recipe, metrics, and a
synthetic data pipeline."""

from .augment import AugmentationConfig, augment_pair
from .blocks import (
    BicubicUpsample,
    FeatureMap,
    PatchEmbed,
    PatchMerge,
    PatchSplit,
    SwinBlock,
    WindowAttention,
    WindowSet,
    build_shift_mask,
    cyclic_shift,
    window_partition,
    window_reverse,
)
from .data import DatasetManifest, ManifestEntry, split_dataset, stratified_batches
from .metrics import (
    MetricsReport,
    border_mask,
    confusion_matrix,
    dice_loss,
    error_map,
    evaluate_pairs,
    iou_scores,
    region_accuracy,
)
from .model import (
    BenthiqNet,
    ModelConfig,
    build_model,
    desk_config,
    load_checkpoint,
    save_checkpoint,
    swin_b_config,
    swin_t_config,
)
from .synth import generate_tile, mask_from_fractions, render_tile
from .tensor import Parameter, Rng, Tensor, backward, no_grad, sgd_step
from .training import TrainSettings, evaluate_model, train_model

__all__ = [
    "AugmentationConfig",
    "BenthiqNet",
    "BicubicUpsample",
    "DatasetManifest",
    "FeatureMap",
    "ManifestEntry",
    "MetricsReport",
    "ModelConfig",
    "Parameter",
    "PatchEmbed",
    "PatchMerge",
    "PatchSplit",
    "Rng",
    "SwinBlock",
    "Tensor",
    "TrainSettings",
    "WindowAttention",
    "WindowSet",
    "augment_pair",
    "backward",
    "border_mask",
    "build_model",
    "build_shift_mask",
    "confusion_matrix",
    "cyclic_shift",
    "desk_config",
    "dice_loss",
    "error_map",
    "evaluate_model",
    "evaluate_pairs",
    "generate_tile",
    "iou_scores",
    "load_checkpoint",
    "mask_from_fractions",
    "no_grad",
    "region_accuracy",
    "render_tile",
    "save_checkpoint",
    "sgd_step",
    "split_dataset",
    "stratified_batches",
    "swin_b_config",
    "swin_t_config",
    "train_model",
    "window_partition",
    "window_reverse",
]

__version__ = "0.1.0"
