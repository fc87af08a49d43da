"""Command-line entry point: synth | train | eval | predict | ablate.

Every command writes a `run_manifest.txt` into its output directory with
the full merged configuration plus sha256 hashes of the artifacts it
produced; the manifest is itself a valid config file, so a run can be
reproduced from it.  Training logs use logical timestamps (epoch tags),
which keeps two same-seed runs byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from .config import PROFILES, RunConfig, build_config, config_lines
from .data import DatasetManifest, ManifestEntry, class_pixel_counts, split_dataset
from .errors import BenthiqError, ConfigError
from .metrics import class_names, confusion_matrix, error_map, iou_scores
from .model import ModelConfig, build_model, load_checkpoint
from .rasters import read_image, read_mask, render_mask, write_gray, write_image, write_mask
from .synth import generate_tile, jitter_fractions
from .tensor import Rng
from .training import TrainSettings, evaluate_model, train_model

_SYNTH_DOMAIN = 10
_SPLIT_DOMAIN = 11

OUT_ROOT_ENV = "BENTHIQ_OUT_ROOT"


def _resolve_out(out: str) -> Path:
    if not out:
        raise ConfigError("no output directory set (use --out or the out config key)")
    path = Path(out)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _write_run_manifest(out: Path, cfg: RunConfig, command: str, artifacts: list[Path]) -> None:
    lines = config_lines(cfg, command)
    for art in sorted(artifacts):
        lines.append(f"hash.{art.name} = {_sha256(art)}")
    (out / "run_manifest.txt").write_text("\n".join(lines) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


# -- synth ---------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> int:
    out = _resolve_out(cfg.out)
    manifest_path = out / "manifest.tsv"
    if manifest_path.exists() and not cfg.force:
        raise ConfigError(f"{manifest_path} already exists; pass --force to regenerate")
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    man = DatasetManifest(seed=cfg.seed, fractions=tuple(cfg.composition), root=out)
    totals = np.zeros(cfg.num_classes, dtype=np.int64)
    for i in range(cfg.tiles):
        rng = Rng(cfg.seed).derive(_SYNTH_DOMAIN, i)
        fractions = jitter_fractions(rng, cfg.composition)
        image, mask = generate_tile(rng, fractions, size=cfg.input_size, degrade=cfg.degrade)
        image_rel = f"images/tile_{i:05d}.ppm"
        mask_rel = f"masks/tile_{i:05d}.pgm"
        write_image(out / image_rel, image)
        write_mask(out / mask_rel, mask)
        totals += class_pixel_counts(mask, cfg.num_classes)
        man.entries.append(ManifestEntry(image_rel, mask_rel, "train"))
    split_dataset(man.entries, Rng(cfg.seed).derive(_SPLIT_DOMAIN), cfg.split_percents)
    man.write(manifest_path)

    realized = totals / totals.sum()
    for name, frac in zip(class_names(cfg.num_classes), realized):
        print(f"realized.{name} = {frac:.4f}")
    print(f"manifest = {manifest_path}")
    _write_run_manifest(out, cfg, "synth", [manifest_path])
    return 0


# -- train ---------------------------------------------------------------


def _train_settings(cfg: RunConfig) -> TrainSettings:
    return TrainSettings(
        learning_rate=cfg.require_learning_rate(),
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        momentum=cfg.momentum,
        weight_decay=cfg.weight_decay,
        seed=cfg.seed,
        stratify=cfg.stratify,
        band=(cfg.band_low, cfg.band_high),
        augment=cfg.augment_config(),
        track_train_miou=cfg.track_train_miou,
        early_stop_loss=cfg.early_stop_loss,
        early_stop_miou=cfg.early_stop_miou,
    )


def cmd_train(cfg: RunConfig) -> int:
    out = _resolve_out(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.data:
        raise ConfigError("no dataset manifest set (use --data)")
    manifest = DatasetManifest.read(cfg.data)
    if cfg.resume:
        model = load_checkpoint(cfg.resume, expect=cfg.model_config())
    else:
        model = build_model(cfg.model_config(), Rng(cfg.seed))
    settings = _train_settings(cfg)

    log_path = out / "train.log"
    with open(log_path, "w") as log_file:

        def log_fn(epoch: int, key: str, value) -> None:
            log_file.write(f"e{epoch:04d}\t{key}\t{_fmt(value)}\n")
            log_file.flush()

        result = train_model(model, manifest, settings, log_fn=log_fn, checkpoint_dir=out)

    print(f"epochs_run = {model.epoch}")
    print(f"final_train_dice_loss = {result.final_train_loss:.6f}")
    if result.best_epoch >= 0:
        print(f"best_val_miou = {result.best_val_miou:.2f} (epoch {result.best_epoch})")
    artifacts = [log_path, out / "final.ckpt"]
    if (out / "best.ckpt").exists():
        artifacts.append(out / "best.ckpt")
    _write_run_manifest(out, cfg, "train", artifacts)
    return 0


# -- eval ----------------------------------------------------------------


def cmd_eval(cfg: RunConfig) -> int:
    out = _resolve_out(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.checkpoint:
        raise ConfigError("no checkpoint set (use --checkpoint)")
    if not cfg.data:
        raise ConfigError("no dataset manifest set (use --data)")
    model = load_checkpoint(cfg.checkpoint)
    manifest = DatasetManifest.read(cfg.data)
    entries = manifest.subset("test")
    if not entries:
        raise ConfigError("test split is empty")
    tiles = [
        (read_image(manifest.image_path(e)), read_mask(manifest.mask_path(e), model.cfg.num_classes))
        for e in entries
    ]
    pooled, per_tile = evaluate_model(model, tiles)
    report_path = out / "eval_report.txt"
    lines = pooled.to_lines("pooled") + per_tile.to_lines("per_tile")
    report_path.write_text("\n".join(lines) + "\n")
    for line in pooled.to_lines("pooled"):
        print(line)
    _write_run_manifest(out, cfg, "eval", [report_path])
    return 0


# -- predict ---------------------------------------------------------------


def cmd_predict(cfg: RunConfig, images: list[str], gts: list[str]) -> int:
    out = _resolve_out(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.checkpoint:
        raise ConfigError("no checkpoint set (use --checkpoint)")
    if gts and len(gts) != len(images):
        raise ConfigError(f"{len(images)} images but {len(gts)} ground-truth masks")
    model = load_checkpoint(cfg.checkpoint)
    size = model.cfg.input_size
    artifacts: list[Path] = []
    for idx, image_path in enumerate(images):
        image = read_image(image_path)
        if image.shape[:2] != (size, size):
            raise ConfigError(
                f"{image_path}: size {image.shape[1]}x{image.shape[0]} does not match the "
                f"model's input size {size}x{size} (no silent resizing)"
            )
        pred = model.predict(image)
        stem = Path(image_path).stem
        mask_path = out / f"{stem}.mask.pgm"
        render_path = out / f"{stem}.render.ppm"
        write_mask(mask_path, pred)
        write_image(render_path, render_mask(pred))
        artifacts += [mask_path, render_path]
        if gts:
            gt = read_mask(gts[idx], model.cfg.num_classes)
            errors = error_map(pred, gt)
            err_path = out / f"{stem}.error.pgm"
            write_gray(err_path, errors.astype(np.uint8) * 255)
            artifacts.append(err_path)
            _, miou = iou_scores(confusion_matrix(pred, gt, model.cfg.num_classes))
            print(f"miou.{stem} = {miou:.2f}")
    _write_run_manifest(out, cfg, "predict", artifacts)
    return 0


# -- ablate -----------------------------------------------------------------

_ABLATE_VARIANTS = {
    "desk_t": {"embed_dim": 24, "heads": (3, 6, 12, 24), "variant": "custom"},
    "desk_b": {"embed_dim": 32, "heads": (2, 4, 8, 16), "variant": "custom"},
    "swin_t": {"embed_dim": 96, "heads": (3, 6, 12, 24), "variant": "swin_t"},
    "swin_b": {"embed_dim": 128, "heads": (4, 8, 16, 32), "variant": "swin_b"},
}


def fit_window(input_size: int, patch_size: int, requested: int) -> int:
    """Largest window size <= requested dividing every stage resolution."""
    deepest = input_size // patch_size // 8
    for m in range(min(requested, deepest), 0, -1):
        if deepest % m == 0:
            return m
    return 1


def _cell_model_config(cfg: RunConfig, axis: str, value) -> ModelConfig:
    fields = {
        "embed_dim": cfg.embed_dim, "depths": tuple(cfg.depths), "heads": tuple(cfg.heads),
        "window_size": cfg.window_size, "patch_size": cfg.patch_size,
        "num_classes": cfg.num_classes, "input_size": cfg.input_size,
        "upsampling": cfg.upsampling, "variant": cfg.variant,
        "use_relative_bias": cfg.use_relative_bias,
    }
    if axis == "input_size":
        fields["input_size"] = int(value)
    elif axis == "upsampling":
        fields["upsampling"] = str(value)
    elif axis == "variant":
        if value not in _ABLATE_VARIANTS:
            raise ConfigError(f"unknown ablation variant {value!r}; available: {sorted(_ABLATE_VARIANTS)}")
        fields.update(_ABLATE_VARIANTS[value])
    fields["window_size"] = fit_window(fields["input_size"], fields["patch_size"], fields["window_size"])
    return ModelConfig(**fields)


def _dataset_for_size(cfg: RunConfig, base: DatasetManifest, base_size: int,
                      size: int, out: Path) -> DatasetManifest:
    """Reuse the given dataset when tile sizes match; otherwise synthesize a
    matching dataset (same seed, count, and composition) at the cell's size."""
    if size == base_size:
        return base
    cell_dir = out / f"data_{size}"
    manifest_path = cell_dir / "manifest.tsv"
    if not manifest_path.exists():
        sub = build_config(overrides={
            "out": str(cell_dir), "seed": base.seed or cfg.seed, "tiles": len(base.entries),
            "input_size": size,
            "composition": tuple(base.fractions) if base.fractions else tuple(cfg.composition),
            "split_percents": tuple(cfg.split_percents), "degrade": cfg.degrade,
            "num_classes": cfg.num_classes,
        })
        cmd_synth(sub)
    return DatasetManifest.read(manifest_path)


def cmd_ablate(cfg: RunConfig) -> int:
    out = _resolve_out(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.data:
        raise ConfigError("no dataset manifest set (use --data)")
    cfg.require_learning_rate()
    base_manifest = DatasetManifest.read(cfg.data)
    first = base_manifest.entries[0]
    base_size = read_mask(base_manifest.mask_path(first), cfg.num_classes).shape[0]

    grid: list[tuple[str, str]] = []
    grid += [("input_size", str(v)) for v in cfg.ablate_input_sizes]
    grid += [("upsampling", v) for v in cfg.ablate_upsamplings]
    grid += [("variant", v) for v in cfg.ablate_variants]

    names = class_names(cfg.num_classes)
    rows: list[dict] = []
    cache: dict[tuple, dict] = {}
    for axis, value in grid:
        row = {"axis": axis, "value": value}
        try:
            mc = _cell_model_config(cfg, axis, value)
            key = (mc.to_dict().__repr__(),)
            if key in cache:
                rows.append({**cache[key], "axis": axis, "value": value})
                continue
            data = _dataset_for_size(cfg, base_manifest, base_size, mc.input_size, out)
            model = build_model(mc, Rng(cfg.seed))
            settings = _train_settings(cfg)
            train_model(model, data, settings)
            tiles = [
                (read_image(data.image_path(e)), read_mask(data.mask_path(e), mc.num_classes))
                for e in data.subset("test")
            ]
            pooled, _ = evaluate_model(model, tiles)
            row["window_size"] = mc.window_size
            row["miou"] = pooled.miou
            for i, n in enumerate(names):
                row[f"iou.{n}"] = pooled.per_class_iou[i]
            cache[key] = row
        except (BenthiqError, OSError) as exc:
            row["error"] = str(exc)
        rows.append(row)

    table = _format_ablation_table(rows, names)
    (out / "ablation.txt").write_text(table)
    tsv_lines = ["axis\tvalue\twindow\tmiou\t" + "\t".join(f"iou_{n}" for n in names)]
    for row in rows:
        if "error" in row:
            tsv_lines.append(f"{row['axis']}\t{row['value']}\terror\t{row['error']}")
        else:
            ious = "\t".join(f"{row[f'iou.{n}']:.2f}" for n in names)
            tsv_lines.append(
                f"{row['axis']}\t{row['value']}\t{row['window_size']}\t{row['miou']:.2f}\t{ious}"
            )
    (out / "ablation.tsv").write_text("\n".join(tsv_lines) + "\n")

    size_rows = [r for r in rows if r["axis"] == "input_size" and "miou" in r]
    if len(size_rows) >= 2:
        ordered = sorted(size_rows, key=lambda r: int(r["value"]))
        direction = "larger>=smaller" if ordered[-1]["miou"] >= ordered[0]["miou"] else "smaller>larger"
        print(f"input_size_direction = {direction}")
    print(table)
    _write_run_manifest(out, cfg, "ablate", [out / "ablation.txt", out / "ablation.tsv"])
    return 0


def _format_ablation_table(rows: list[dict], names) -> str:
    headers = ["parameter", "value", "mIOU"] + [n.capitalize() for n in names]
    body: list[list[str]] = []
    for row in rows:
        if "error" in row:
            body.append([row["axis"], str(row["value"]), "error: " + row["error"]] + [""] * len(names))
        else:
            body.append(
                [row["axis"], str(row["value"]), f"{row['miou']:.2f}"]
                + [f"{row[f'iou.{n}']:.2f}" for n in names]
            )
    widths = [max(len(headers[i]), *(len(r[i]) for r in body)) for i in range(len(headers))]

    def fmt_row(cells):
        return "  ".join(c.ljust(widths[i]) for i, c in enumerate(cells)).rstrip()

    lines = [fmt_row(headers), fmt_row(["-" * w for w in widths])]
    lines += [fmt_row(r) for r in body]
    return "\n".join(lines) + "\n"


# -- argument parsing ----------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--profile", choices=sorted(PROFILES), help="named settings profile")
    parser.add_argument("--set", dest="sets", action="append", default=[],
                        metavar="KEY=VALUE", help="override any config key")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="run seed")


def _overrides_from_args(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for item in args.sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = value.strip()
    for attr, key in (
        ("out", "out"), ("seed", "seed"), ("data", "data"), ("lr", "learning_rate"),
        ("epochs", "epochs"), ("batch_size", "batch_size"), ("tiles", "tiles"),
        ("checkpoint", "checkpoint"), ("resume", "resume"), ("force", "force"),
        ("composition", "composition"),
    ):
        value = getattr(args, attr, None)
        if value is not None and value is not False:
            overrides[key] = value
    return overrides


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="benthiq",
        description="Synthesize benthic tiles, train, evaluate, and run the segmentation network.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic tile dataset + manifest")
    _add_common(p)
    p.add_argument("--tiles", type=int, help="number of tile pairs")
    p.add_argument("--composition", help="target class fractions, e.g. 0.48,0.23,0.12,0.17")
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")

    p = sub.add_parser("train", help="train a model on a dataset manifest")
    _add_common(p)
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--lr", help="learning rate (required; the recipe does not pin one)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--resume", help="checkpoint to resume from")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_common(p)
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--checkpoint", help="checkpoint path")

    p = sub.add_parser("predict", help="predict masks (and error maps when gt is given)")
    _add_common(p)
    p.add_argument("--checkpoint", help="checkpoint path")
    p.add_argument("--gt", action="append", default=[], help="ground-truth mask, one per image")
    p.add_argument("images", nargs="+", help="input images (P6)")

    p = sub.add_parser("ablate", help="train/evaluate the ablation grid and emit a table")
    _add_common(p)
    p.add_argument("--data", help="dataset manifest path")
    p.add_argument("--lr", help="learning rate (required)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args.profile, args.config, _overrides_from_args(args))
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.images, args.gt)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except (BenthiqError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
