"""Run configuration: flat `key = value` files, named profiles, overrides.

Precedence, lowest to highest: built-in defaults, profile, config file,
command-line overrides.  The learning rate has no default on purpose: a
training run must state it explicitly in the file or on the command line.
Every command writes its merged config back out as a run manifest, which
is itself a valid config file.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .augment import AugmentationConfig
from .errors import ConfigError
from .model import ModelConfig

# Keys allowed in a config file that are not config fields (run manifests
# carry these for provenance).
_PASSIVE_PREFIXES = ("hash.", "artifact.")
_PASSIVE_KEYS = ("command",)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"expected on/off, got {s!r}")


def _parse_int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(","))


def _parse_float_tuple(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(","))


def _parse_str_tuple(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _parse_opt_float(s: str) -> float | None:
    return None if s.strip().lower() == "none" else float(s)


@dataclass
class RunConfig:
    # model architecture
    embed_dim: int = 96
    depths: tuple[int, ...] = (2, 2, 6, 2)
    heads: tuple[int, ...] = (3, 6, 12, 24)
    window_size: int = 7
    patch_size: int = 4
    num_classes: int = 4
    input_size: int = 224
    upsampling: str = "patch_split"
    variant: str = "swin_t"
    use_relative_bias: bool = True
    # optimizer and schedule (momentum/decay fixed by the recipe, overridable)
    learning_rate: float | None = None
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 500
    batch_size: int = 24
    # run plumbing
    seed: int = 1234
    data: str = ""
    out: str = ""
    checkpoint: str = ""
    resume: str = ""
    force: bool = False
    # augmentation stack
    augment: bool = True
    aug_apply_prob: float = 0.5
    aug_flip_prob: float = 0.5
    aug_max_rotation_deg: float = 20.0
    aug_rgb_shift_limit: int = 20
    aug_brightness_contrast_limit: float = 0.3
    # stratified batching
    stratify: bool = True
    band_low: float = 0.20
    band_high: float = 0.40
    # training extras
    track_train_miou: bool = False
    early_stop_loss: float | None = None
    early_stop_miou: float | None = None
    # synthesis
    tiles: int = 100
    composition: tuple[float, ...] = (0.48, 0.23, 0.12, 0.17)
    split_percents: tuple[int, ...] = (75, 15, 10)
    degrade: bool = True
    # ablation grid
    ablate_input_sizes: tuple[int, ...] = (64, 128)
    ablate_upsamplings: tuple[str, ...] = ("patch_split", "bicubic")
    ablate_variants: tuple[str, ...] = ("desk_t", "desk_b")

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim,
            depths=tuple(self.depths),
            heads=tuple(self.heads),
            window_size=self.window_size,
            patch_size=self.patch_size,
            num_classes=self.num_classes,
            input_size=self.input_size,
            upsampling=self.upsampling,
            variant=self.variant,
            use_relative_bias=self.use_relative_bias,
        )

    def augment_config(self) -> AugmentationConfig:
        return AugmentationConfig(
            enabled=self.augment,
            apply_prob=self.aug_apply_prob,
            flip_prob=self.aug_flip_prob,
            max_rotation_deg=self.aug_max_rotation_deg,
            rgb_shift_limit=self.aug_rgb_shift_limit,
            brightness_contrast_limit=self.aug_brightness_contrast_limit,
        )

    def require_learning_rate(self) -> float:
        if self.learning_rate is None:
            raise ConfigError(
                "learning_rate is not set: state it explicitly in the config file "
                "or with --lr (the training recipe does not pin one)"
            )
        return self.learning_rate


def _field_parser(f) -> callable:
    t = f.type
    if t in ("int", int):
        return int
    if t in ("float", float):
        return float
    if t in ("str", str):
        return str
    if t in ("bool", bool):
        return _parse_bool
    if t == "float | None":
        return _parse_opt_float
    if t == "tuple[int, ...]":
        return _parse_int_tuple
    if t == "tuple[float, ...]":
        return _parse_float_tuple
    if t == "tuple[str, ...]":
        return _parse_str_tuple
    raise AssertionError(f"no parser for config field {f.name} of type {t}")


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


PROFILES = {
    # desk: small enough to train in minutes on a CPU
    "desk": {
        "embed_dim": 24,
        "depths": (2, 2, 2, 2),
        "heads": (3, 6, 12, 24),
        "window_size": 4,
        "input_size": 128,
        "variant": "custom",
        "batch_size": 4,
        "epochs": 200,
        "tiles": 100,
    },
    # paper-faithful settings; long-running on a CPU
    "paper": {
        "embed_dim": 96,
        "depths": (2, 2, 6, 2),
        "heads": (3, 6, 12, 24),
        "window_size": 7,
        "input_size": 224,
        "variant": "swin_t",
        "batch_size": 24,
        "epochs": 500,
    },
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse `key = value` lines into typed values; unknown keys are errors."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _PASSIVE_KEYS or any(key.startswith(p) for p in _PASSIVE_PREFIXES):
            continue
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _field_parser(_FIELDS[key])(value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def build_config(
    profile: str | None = None,
    config_file=None,
    overrides: dict | None = None,
) -> RunConfig:
    merged: dict = {}
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; available: {sorted(PROFILES)}")
        merged.update(PROFILES[profile])
    if config_file is not None:
        path = Path(config_file)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        merged.update(parse_config_text(path.read_text(), str(path)))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _field_parser(_FIELDS[key])(value)
        merged[key] = value
    return RunConfig(**merged)


def config_lines(cfg: RunConfig, command: str) -> list[str]:
    """The merged config as manifest lines; nothing stays implicit."""
    lines = [f"command = {command}"]
    for name in sorted(_FIELDS):
        lines.append(f"{name} = {_format_value(getattr(cfg, name))}")
    return lines
