"""Acceptance suite: one test per exit criterion, each printing a pass/fail
line (run with `pytest tests/test_acceptance.py -v -s` to see them live).

The training-based criteria run the small desk profile (embed 24, depths
2,2,2,2, window 4, 128x128 tiles, batch 4, lr 0.01, seed 1234), which fits
commodity-CPU budgets.
"""
import time
from contextlib import contextmanager

import numpy as np
import pytest

from benthiq import Rng, tensor as T
from benthiq.blocks import MASK_FILL, FeatureMap, PatchEmbed, SwinBlock, build_shift_mask, \
    cyclic_shift, window_partition, window_reverse
from benthiq.cli import main
from benthiq.metrics import confusion_matrix, dice_loss, iou_scores
from benthiq.model import build_model, desk_config, load_checkpoint, save_checkpoint, swin_t_config
from benthiq.nn import Linear, Module
from benthiq.rasters import read_image, read_mask, write_image, write_mask
from benthiq.tensor import Tensor, backward, no_grad
from benthiq.training import TrainSettings, load_split_tiles, train_model
from benthiq.augment import AugmentationConfig

from conftest import make_dataset, random_image, random_mask
from fdcheck import check_input_grad, check_param_grads, fd_grad
from test_blocks import brute_force_mask
from test_metrics import oracle_border, oracle_confusion, oracle_iou, oracle_region_accuracy
from benthiq.metrics import border_mask, region_accuracy


@contextmanager
def criterion(name):
    start = time.time()
    try:
        yield
    except BaseException:
        print(f"[ACCEPT] {name}: FAIL ({time.time() - start:.1f}s)")
        raise
    print(f"[ACCEPT] {name}: PASS ({time.time() - start:.1f}s)")


class TwoBlockNet(Module):
    """patch embed + one W-MSA/SW-MSA block pair + class head."""

    def __init__(self, rng):
        self.embed = PatchEmbed(8, rng, patch=4)
        self.block = [SwinBlock(8, 2, 2, shifted=(j % 2 == 1), rng=rng) for j in range(2)]
        self.head = Linear(8, 4, rng)

    def forward(self, img):
        f = self.embed(img)
        for blk in self.block:
            f = blk(f)
        return self.head(f.data).reshape(f.height, f.width, 4)


def test_gradient_suite():
    with criterion("gradient-suite"):
        start = time.time()
        rng = Rng(1234)

        b = Tensor(rng.normal((4, 5)))
        check_input_grad(lambda a: T.matmul(a, b).mean(), rng.normal((3, 4)), rtol=1e-3)

        w7 = Tensor(np.arange(7, dtype=np.float32))
        check_input_grad(lambda x: (T.softmax(x, 0) * w7).mean(), rng.normal((7,)), rtol=1e-3)

        gamma = Tensor(np.ones(16, np.float32))
        beta = Tensor(np.zeros(16, np.float32))
        wln = Tensor(rng.normal((4, 16)))
        check_input_grad(lambda x: (T.layer_norm(x, gamma, beta) * wln).mean(),
                         rng.normal((4, 16)), rtol=1e-3)

        check_input_grad(lambda x: T.gelu(x).mean(), rng.normal((13,)), rtol=1e-3)

        wl = Tensor(rng.normal((6, 3), std=0.3))
        bl = Tensor(rng.normal((3,), std=0.3))
        check_input_grad(lambda x: T.linear(x, wl, bl).mean(), rng.normal((5, 6)), rtol=1e-3)

        # rearrangements compose into the chain without disturbing gradients
        check_input_grad(
            lambda x: T.permute(T.reshape(x, (4, 6)), (1, 0)).mean() + (x * x).mean(),
            rng.normal((2, 3, 4)), rtol=1e-3,
        )

        gt = random_mask(2, size=3)
        lt0 = rng.normal((3, 3, 4), std=0.5)
        lt = Tensor(lt0.copy(), requires_grad=True)
        backward(dice_loss(lt, gt))

        def dice_value(arr):
            with no_grad():
                return dice_loss(Tensor(arr), gt).item()

        np.testing.assert_allclose(lt.grad, fd_grad(dice_value, lt0), rtol=1e-2, atol=1e-4)

        # composed 2-block network on an 8x8 input: every parameter
        net = TwoBlockNet(Rng(7))
        params = net.bind_names()
        img = random_image(3, size=8)
        net_gt = random_mask(4, size=2)

        def build_loss():
            return dice_loss(net.forward(img), net_gt)

        check_param_grads(build_loss, params, rtol=1e-2, atol=1e-4)
        assert time.time() - start < 120.0, "gradient suite exceeded 2 minutes"


def test_structural_suite():
    with criterion("structural-suite"):
        from test_model import DESK_PARAM_COUNT, SWIN_T_PARAM_COUNT

        swin_t = swin_t_config()
        assert swin_t.stage_resolutions() == (56, 28, 14, 7)
        assert swin_t.stage_channels() == (96, 192, 384, 768)
        model = build_model(swin_t, Rng(1234))
        assert model.param_count() == SWIN_T_PARAM_COUNT   # golden from first build
        with no_grad():
            logits = model.forward(random_image(1, 224))   # chain asserted inside forward
        assert logits.shape == (224, 224, 4)

        desk = desk_config()
        assert desk.stage_resolutions() == (32, 16, 8, 4)
        assert desk.stage_channels() == (24, 48, 96, 192)
        model = build_model(desk, Rng(1234))
        assert model.param_count() == DESK_PARAM_COUNT
        with no_grad():
            logits = model.forward(random_image(2, 128))
        assert logits.shape == (128, 128, 4)


def test_shifted_window_correctness():
    with criterion("shifted-window-correctness"):
        for h, m, offset in ((14, 7, 3), (28, 7, 3), (8, 4, 2), (16, 4, 2)):
            mask = build_shift_mask(h, h, m, offset).data
            np.testing.assert_array_equal(mask, brute_force_mask(h, h, m, offset))

        mask = build_shift_mask(14, 14, 7, 3)
        logits = Tensor(Rng(5).normal(mask.shape))
        p = T.softmax(logits + mask, axis=-1).data
        assert p[mask.data == MASK_FILL].max() < 1e-4


def test_roundtrip_suite(tmp_path):
    with criterion("roundtrip-suite"):
        # window partition/reverse
        for h, w, m in ((14, 14, 7), (28, 28, 7), (8, 8, 4), (16, 16, 4)):
            f = FeatureMap(h, w, 3, Tensor(Rng(h + m).normal((h * w, 3))))
            back = window_reverse(window_partition(f, m))
            np.testing.assert_array_equal(back.data.data, f.data.data)

        # cyclic shift +- offset
        f = FeatureMap(8, 8, 2, Tensor(Rng(9).normal((64, 2))))
        back = cyclic_shift(cyclic_shift(f, 2), -2)
        np.testing.assert_array_equal(back.data.data, f.data.data)

        # checkpoint save/load
        from conftest import MICRO
        model = build_model(MICRO, Rng(1234))
        img = random_image(5, 64)
        with no_grad():
            before = model.forward(img).data
        save_checkpoint(model, tmp_path / "rt.ckpt")
        loaded = load_checkpoint(tmp_path / "rt.ckpt")
        with no_grad():
            after = loaded.forward(img).data
        np.testing.assert_array_equal(before, after)

        # raster write/read
        img = random_image(6, 32)
        mask = random_mask(7, 32)
        write_image(tmp_path / "t.ppm", img)
        write_mask(tmp_path / "t.pgm", mask)
        np.testing.assert_array_equal(read_image(tmp_path / "t.ppm"), img)
        np.testing.assert_array_equal(read_mask(tmp_path / "t.pgm"), mask)


def test_metrics_oracle_equivalence():
    with criterion("metrics-oracle-equivalence"):
        for trial in range(100):
            rng = Rng(5000 + trial)
            h = int(rng.integers(2, 9))
            w = int(rng.integers(2, 9))
            gt = rng.integers(0, 4, shape=(h, w)).astype(np.uint8)
            pred = rng.integers(0, 4, shape=(h, w)).astype(np.uint8)
            cm = confusion_matrix(pred, gt, 4)
            np.testing.assert_array_equal(cm, oracle_confusion(pred, gt, 4))
            per, miou = iou_scores(cm)
            oper, omiou = oracle_iou(cm)
            np.testing.assert_allclose(per, oper)
            np.testing.assert_allclose(miou, omiou)
            border = border_mask(gt)
            np.testing.assert_array_equal(border, oracle_border(gt))
            if border.any():
                np.testing.assert_allclose(
                    region_accuracy(pred, gt, border),
                    oracle_region_accuracy(pred, gt, border),
                )
            if (~border).any():
                np.testing.assert_allclose(
                    region_accuracy(pred, gt, ~border),
                    oracle_region_accuracy(pred, gt, ~border),
                )

        gt = np.array([[0, 0], [1, 1]], dtype=np.uint8)
        pred = np.array([[0, 1], [1, 1]], dtype=np.uint8)
        _, miou = iou_scores(confusion_matrix(pred, gt, 4))
        assert abs(miou - 58.33) < 0.01


def test_tiny_overfit(tmp_path):
    with criterion("tiny-overfit"):
        start = time.time()
        manifest = make_dataset(tmp_path / "overfit", ["train"] * 8, seed=1234, size=128)
        model = build_model(desk_config(), Rng(1234))
        settings = TrainSettings(
            learning_rate=0.01, epochs=200, batch_size=4, seed=1234,
            augment=AugmentationConfig(enabled=False),
            track_train_miou=True, early_stop_loss=0.05, early_stop_miou=90.0,
        )
        result = train_model(model, manifest, settings)
        last = result.history[-1]
        assert last["train_dice_loss"] < 0.05, f"dice loss {last['train_dice_loss']:.4f} >= 0.05"
        assert last["train_miou"] > 90.0, f"train mIOU {last['train_miou']:.2f} <= 90"
        assert last["epoch"] < 200
        elapsed = time.time() - start
        assert elapsed < 1800.0, f"tiny-overfit exceeded 30 minutes ({elapsed:.0f}s)"
        print(f"  overfit reached dice {last['train_dice_loss']:.4f}, "
              f"mIOU {last['train_miou']:.2f} at epoch {last['epoch']} in {elapsed:.0f}s")


def test_generalization_smoke(tmp_path):
    with criterion("generalization-smoke"):
        splits = ["train"] * 200 + ["val"] * 8 + ["test"] * 20
        manifest = make_dataset(tmp_path / "gen", splits, seed=1234, size=128,
                                fractions=(0.30, 0.26, 0.20, 0.24))
        model = build_model(desk_config(), Rng(1234))
        settings = TrainSettings(learning_rate=0.01, epochs=4, batch_size=4, seed=1234)
        train_model(model, manifest, settings)

        test_tiles = load_split_tiles(manifest, "test")
        pooled = np.zeros((4, 4), dtype=np.int64)
        with no_grad():
            for img, gt in test_tiles:
                pooled += confusion_matrix(model.predict(img), gt, 4)
        model_miou = iou_scores(pooled)[1]

        # constant-majority-class baseline, computed from the test split
        counts = np.zeros(4, dtype=np.int64)
        for _, gt in test_tiles:
            counts += np.bincount(gt.ravel(), minlength=4)
        majority = int(np.argmax(counts))
        base_cm = np.zeros((4, 4), dtype=np.int64)
        for _, gt in test_tiles:
            base_cm += confusion_matrix(np.full_like(gt, majority), gt, 4)
        baseline_miou = iou_scores(base_cm)[1]

        margin = model_miou - baseline_miou
        print(f"  model mIOU {model_miou:.2f} vs majority baseline {baseline_miou:.2f} "
              f"(margin {margin:.2f})")
        assert margin >= 20.0, f"margin {margin:.2f} < 20 points"


def test_ablation_direction(tmp_path):
    with criterion("ablation-direction"):
        data = tmp_path / "abl_data"
        rc = main(["synth", "--out", str(data), "--tiles", "16", "--seed", "1234",
                   "--set", "input_size=64",
                   "--composition", "0.25,0.25,0.25,0.25"])
        assert rc == 0
        out = tmp_path / "abl"
        rc = main(["ablate", "--data", str(data / "manifest.tsv"), "--out", str(out),
                   "--profile", "desk", "--lr", "0.01", "--epochs", "2",
                   "--batch-size", "4", "--seed", "1234",
                   "--set", "augment=off",
                   "--set", "ablate_input_sizes=64,128",
                   "--set", "ablate_upsamplings=patch_split,bicubic",
                   "--set", "ablate_variants="])
        assert rc == 0
        rows = (out / "ablation.tsv").read_text().splitlines()
        header = rows[0].split("\t")
        size_rows = [dict(zip(header, r.split("\t"))) for r in rows[1:]]
        input_rows = [r for r in size_rows if r["axis"] == "input_size"]
        assert len(input_rows) == 2
        mious = {r["value"]: float(r["miou"]) for r in input_rows}
        assert set(mious) == {"64", "128"}          # both rows populated
        direction = "larger>=smaller" if mious["128"] >= mious["64"] else "smaller>larger"
        print(f"  input-size sweep mIOUs {mious} -> {direction} (recorded, non-binding)")
        table = (out / "ablation.txt").read_text()
        assert "input_size" in table and "upsampling" in table


def test_training_determinism(tmp_path):
    with criterion("training-determinism"):
        data = tmp_path / "det_data"
        rc = main(["synth", "--out", str(data), "--tiles", "8", "--seed", "1234",
                   "--set", "input_size=128",
                   "--composition", "0.25,0.25,0.25,0.25"])
        assert rc == 0
        outs = []
        for label in ("a", "b"):
            out = tmp_path / f"det_{label}"
            rc = main(["train", "--data", str(data / "manifest.tsv"), "--out", str(out),
                       "--profile", "desk", "--lr", "0.01", "--epochs", "3",
                       "--batch-size", "4", "--seed", "1234"])
            assert rc == 0
            outs.append(out)
        a, b = outs
        assert (a / "train.log").read_bytes() == (b / "train.log").read_bytes()
        assert (a / "final.ckpt").read_bytes() == (b / "final.ckpt").read_bytes()
        assert (a / "best.ckpt").read_bytes() == (b / "best.ckpt").read_bytes()
