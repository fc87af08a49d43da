import numpy as np
import pytest

from benthiq import Rng
from benthiq.errors import CheckpointError, ConfigError, DimensionError
from benthiq.model import (
    BenthiqNet,
    ModelConfig,
    build_model,
    desk_config,
    load_checkpoint,
    save_checkpoint,
    swin_b_config,
    swin_t_config,
)
from benthiq.tensor import no_grad

from conftest import MICRO, random_image

DESK_PARAM_COUNT = 2_599_924
SWIN_T_PARAM_COUNT = 55_437_736


def micro_model(seed=42):
    return build_model(MICRO, Rng(seed))


class TestConfig:
    def test_swin_t_stage_schedule(self):
        cfg = swin_t_config()
        assert cfg.stage_resolutions() == (56, 28, 14, 7)
        assert cfg.stage_channels() == (96, 192, 384, 768)

    def test_swin_b_stage_channels(self):
        cfg = swin_b_config()
        assert cfg.stage_channels() == (128, 256, 512, 1024)
        cfg.validate()

    def test_desk_profile_builds(self):
        cfg = desk_config()
        assert cfg.stage_resolutions() == (32, 16, 8, 4)
        cfg.validate()

    def test_odd_depth_rejected(self):
        with pytest.raises(ConfigError, match="even"):
            ModelConfig(depths=(2, 3, 6, 2), variant="custom").validate()

    def test_window_divisibility_names_stage_resolution(self):
        with pytest.raises(ConfigError, match="resolution 32"):
            ModelConfig(embed_dim=24, depths=(2, 2, 2, 2), heads=(3, 6, 12, 24),
                        window_size=7, input_size=128, variant="custom").validate()

    def test_variant_constraints(self):
        with pytest.raises(ConfigError, match="swin_b"):
            ModelConfig(embed_dim=96, variant="swin_b").validate()


class TestForward:
    def test_micro_logits_shape_and_finite(self):
        model = micro_model()
        with no_grad():
            logits = model.forward(random_image(1, 64))
        assert logits.shape == (64, 64, 4)
        assert np.isfinite(logits.data).all()

    def test_zero_image_finite(self):
        model = micro_model()
        with no_grad():
            logits = model.forward(np.zeros((64, 64, 3), dtype=np.uint8))
        assert np.isfinite(logits.data).all()

    def test_wrong_extent_rejected(self):
        with pytest.raises(DimensionError):
            micro_model().forward(random_image(1, 32))

    def test_deterministic_across_fresh_builds(self):
        img = random_image(2, 64)
        with no_grad():
            a = micro_model(7).forward(img).data
            b = micro_model(7).forward(img).data
        np.testing.assert_array_equal(a, b)

    def test_skip_connections_affect_output(self):
        model = micro_model()
        img = random_image(3, 64)
        with no_grad():
            normal = model.forward(img).data
            cut = model.forward(img, zero_skips=True).data
        assert not np.allclose(normal, cut)

    def test_desk_forward_full_chain(self):
        model = build_model(desk_config(), Rng(0))
        with no_grad():
            logits = model.forward(random_image(4, 128))
        assert logits.shape == (128, 128, 4)


class TestParameterCounts:
    def test_desk_golden_count(self):
        assert build_model(desk_config(), Rng(0)).param_count() == DESK_PARAM_COUNT

    def test_desk_count_stable_across_seeds(self):
        a = build_model(desk_config(), Rng(0)).param_count()
        b = build_model(desk_config(), Rng(99)).param_count()
        assert a == b

    def test_parameter_names_are_unique_paths(self):
        model = micro_model()
        names = list(model.params)
        assert len(names) == len(set(names))
        assert "encoder.stage0.block1.attn.qkv.weight" in names
        assert "head.weight" in names


class TestPredict:
    def test_uniform_maximal_class(self):
        model = micro_model()
        logits = np.zeros((4, 4, 4), dtype=np.float32)
        logits[:, :, 2] = 5.0
        assert (np.argmax(logits, axis=-1) == 2).all()

    def test_tie_breaks_toward_lowest_class(self):
        logits = np.zeros((2, 2, 4), dtype=np.float32)
        logits[:, :, 0] = 1.0
        logits[:, :, 3] = 1.0
        assert (np.argmax(logits, axis=-1) == 0).all()

    def test_matches_scalar_loop_argmax(self):
        model = micro_model()
        img = random_image(5, 64)
        pred = model.predict(img)
        with no_grad():
            logits = model.forward(img).data
        expected = np.empty((64, 64), dtype=np.uint8)
        for r in range(64):
            for c in range(64):
                best, best_v = 0, logits[r, c, 0]
                for k in range(1, 4):
                    if logits[r, c, k] > best_v:
                        best, best_v = k, logits[r, c, k]
                expected[r, c] = best
        np.testing.assert_array_equal(pred, expected)


class TestCheckpoint:
    def test_roundtrip_forward_bit_exact(self, tmp_path):
        model = micro_model()
        img = random_image(6, 64)
        with no_grad():
            before = model.forward(img).data
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path, epoch=3)
        loaded = load_checkpoint(path)
        assert loaded.epoch == 3 and loaded.seed == model.seed
        with no_grad():
            after = loaded.forward(img).data
        np.testing.assert_array_equal(before, after)

    def test_momentum_buffers_roundtrip(self, tmp_path):
        model = micro_model()
        p = model.params["head.weight"]
        p.momentum[:] = 0.125
        save_checkpoint(model, tmp_path / "m.ckpt")
        loaded = load_checkpoint(tmp_path / "m.ckpt")
        np.testing.assert_array_equal(loaded.params["head.weight"].momentum, p.momentum)

    def test_mismatched_num_classes_is_config_error(self, tmp_path):
        model = micro_model()
        save_checkpoint(model, tmp_path / "m.ckpt")
        from dataclasses import replace
        other = replace(MICRO, num_classes=6)
        with pytest.raises(ConfigError, match="num_classes"):
            load_checkpoint(tmp_path / "m.ckpt", expect=other)

    def test_truncated_file_rejected(self, tmp_path):
        model = micro_model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"NOT-A-CHECKPOINT\n")
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path):
        model = micro_model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        patched = blob.replace(b'"format_version": 1', b'"format_version": 9', 1)
        path.write_bytes(patched)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_unknown_parameter_name_rejected(self, tmp_path):
        model = micro_model()
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        assert b"head.weight" in blob
        path.write_bytes(blob.replace(b"head.weight", b"head.wEIGHT", 1))
        with pytest.raises(CheckpointError, match="unknown parameter"):
            load_checkpoint(path)

    def test_partial_load_keeps_fresh_init_for_missing(self, tmp_path):
        model = micro_model(seed=5)
        model.params["head.weight"].tensor.data[:] = 7.0     # pretend training
        encoder_names = [n for n in model.params if n.startswith(("patch_embed", "encoder"))]
        for n in encoder_names:
            model.params[n].tensor.data[:] = 3.0
        path = tmp_path / "enc.ckpt"
        save_checkpoint(model, path, names=encoder_names)

        with pytest.raises(CheckpointError, match="missing"):
            load_checkpoint(path)

        loaded = load_checkpoint(path, allow_partial=True)
        fresh = build_model(MICRO, Rng(5))
        np.testing.assert_array_equal(
            loaded.params["encoder.stage0.block0.attn.qkv.weight"].data, 3.0
        )
        np.testing.assert_array_equal(
            loaded.params["head.weight"].data, fresh.params["head.weight"].data
        )
