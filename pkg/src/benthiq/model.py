"""The U-shaped network: encoder stages, bottleneck, decoder with skips,
final projection, plus checkpoint persistence.

Dimension chain, for input H=W=S and embed dim C:
    [S, S, 3] -> [S/4, C] -> [S/8, 2C] -> [S/16, 4C] -> [S/32, 8C]   (encoder)
    bottleneck at [S/32, 8C]
    [S/32, 8C] -> [S/16, 4C] -> [S/8, 2C] -> [S/4, C]                (decoder + skips)
    [S/4, C] -> [S/2, C/2] -> [S, C/4] -> [S, S, N]                  (final splits + head)
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .blocks import BicubicUpsample, FeatureMap, PatchEmbed, PatchMerge, PatchSplit, SwinBlock
from .errors import CheckpointError, ConfigError, ContractError, DimensionError
from .nn import Linear, Module
from .tensor import Rng, Tensor, concat, first_nonfinite

UPSAMPLINGS = ("patch_split", "bicubic")
VARIANTS = ("swin_t", "swin_b", "custom")

CHECKPOINT_MAGIC = b"BENTHIQ-CKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
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

    def validate(self) -> None:
        if len(self.depths) != 4 or len(self.heads) != 4:
            raise ConfigError("depths and heads must list exactly 4 stages")
        for d in self.depths:
            if d < 2 or d % 2:
                raise ConfigError(f"stage depths must be even (W-MSA/SW-MSA pairs), got {self.depths}")
        if self.embed_dim % 4:
            raise ConfigError(f"embed_dim {self.embed_dim} must be divisible by 4 for the final splits")
        if self.upsampling not in UPSAMPLINGS:
            raise ConfigError(f"upsampling must be one of {UPSAMPLINGS}, got {self.upsampling!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "swin_t" and (self.embed_dim != 96 or self.depths != (2, 2, 6, 2)):
            raise ConfigError("swin_t requires embed_dim 96 and depths (2, 2, 6, 2)")
        if self.variant == "swin_b" and (self.embed_dim != 128 or self.depths != (2, 2, 6, 2)):
            raise ConfigError("swin_b requires embed_dim 128 and depths (2, 2, 6, 2)")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_size % self.patch_size:
            raise ConfigError(f"input size {self.input_size} not divisible by patch size {self.patch_size}")
        for i, res in enumerate(self.stage_resolutions()):
            if res % self.window_size:
                raise ConfigError(
                    f"stage {i} resolution {res} not divisible by window size {self.window_size}"
                )
        for i, (ch, hd) in enumerate(zip(self.stage_channels(), self.heads)):
            if ch % hd:
                raise ConfigError(f"stage {i} channels {ch} not divisible by heads {hd}")

    def stage_resolutions(self) -> tuple[int, ...]:
        base = self.input_size // self.patch_size
        return tuple(base // (1 << i) for i in range(4))

    def stage_channels(self) -> tuple[int, ...]:
        return tuple(self.embed_dim << i for i in range(4))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls(**{**d, "depths": tuple(d["depths"]), "heads": tuple(d["heads"])})
        cfg.validate()
        return cfg


def swin_t_config(input_size: int = 224, **kw) -> ModelConfig:
    return ModelConfig(input_size=input_size, **kw)


def swin_b_config(input_size: int = 224, **kw) -> ModelConfig:
    return ModelConfig(embed_dim=128, heads=(4, 8, 16, 32), variant="swin_b",
                       input_size=input_size, **kw)


def desk_config(input_size: int = 128, embed_dim: int = 24, **kw) -> ModelConfig:
    """Small profile that trains in minutes on a CPU."""
    return ModelConfig(
        embed_dim=embed_dim,
        depths=(2, 2, 2, 2),
        heads=(3, 6, 12, 24) if embed_dim % 3 == 0 else (2, 4, 8, 16),
        window_size=4,
        input_size=input_size,
        variant="custom",
        **kw,
    )


class _Stage(Module):
    def __init__(self, dim: int, depth: int, heads: int, window: int, rng: Rng, use_bias: bool):
        self.block = [
            SwinBlock(dim, heads, window, shifted=(j % 2 == 1), rng=rng, use_bias_table=use_bias)
            for j in range(depth)
        ]

    def __call__(self, f: FeatureMap) -> FeatureMap:
        for blk in self.block:
            f = blk(f)
        return f


class _Encoder(Module):
    def __init__(self, cfg: ModelConfig, rng: Rng):
        ch = cfg.stage_channels()
        self.stage = [
            _Stage(ch[i], cfg.depths[i], cfg.heads[i], cfg.window_size, rng, cfg.use_relative_bias)
            for i in range(4)
        ]
        self.merge = [PatchMerge(ch[i], rng) for i in range(3)]


class _Bottleneck(Module):
    def __init__(self, cfg: ModelConfig, rng: Rng):
        ch = cfg.stage_channels()[3]
        self.block = [
            SwinBlock(ch, cfg.heads[3], cfg.window_size, shifted=(j % 2 == 1), rng=rng,
                      use_bias_table=cfg.use_relative_bias)
            for j in range(2)
        ]

    def __call__(self, f: FeatureMap) -> FeatureMap:
        for blk in self.block:
            f = blk(f)
        return f


def _make_upsample(dim: int, cfg: ModelConfig, rng: Rng):
    if cfg.upsampling == "bicubic":
        return BicubicUpsample(dim, rng)
    return PatchSplit(dim, rng)


class _DecoderStage(Module):
    """Upsample, fuse the same-resolution encoder features, then blocks."""

    def __init__(self, dim_in: int, depth: int, heads: int, cfg: ModelConfig, rng: Rng):
        dim_out = dim_in // 2
        self.up = _make_upsample(dim_in, cfg, rng)
        self.fuse = Linear(2 * dim_out, dim_out, rng)
        self.block = [
            SwinBlock(dim_out, heads, cfg.window_size, shifted=(j % 2 == 1), rng=rng,
                      use_bias_table=cfg.use_relative_bias)
            for j in range(depth)
        ]

    def __call__(self, f: FeatureMap, skip: FeatureMap, zero_skip: bool = False) -> FeatureMap:
        f = self.up(f)
        if (f.height, f.width, f.channels) != (skip.height, skip.width, skip.channels):
            raise DimensionError(
                f"skip fusion mismatch: decoder {f.height}x{f.width}x{f.channels} vs "
                f"encoder {skip.height}x{skip.width}x{skip.channels}"
            )
        skip_data = Tensor(np.zeros_like(skip.data.data)) if zero_skip else skip.data
        x = concat([f.data, skip_data], axis=-1)        # [T, 2c]
        x = self.fuse(x)
        f = FeatureMap(f.height, f.width, f.channels, x)
        for blk in self.block:
            f = blk(f)
        return f


class _Decoder(Module):
    def __init__(self, cfg: ModelConfig, rng: Rng):
        ch = cfg.stage_channels()
        self.stage = [
            _DecoderStage(ch[3 - k], cfg.depths[2 - k], cfg.heads[2 - k], cfg, rng)
            for k in range(3)
        ]


class _FinalExpand(Module):
    """The last two 2x upsampling steps back to input resolution: C -> C/2 -> C/4."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        c = cfg.embed_dim
        self.up = [_make_upsample(c, cfg, rng), _make_upsample(c // 2, cfg, rng)]

    def __call__(self, f: FeatureMap) -> FeatureMap:
        for up in self.up:
            f = up(f)
        return f


class BenthiqNet(Module):
    """Encoder/decoder segmentation network over square RGB tiles."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        cfg.validate()
        self.cfg = cfg
        self.seed = rng.seed
        self.epoch = 0
        ch = cfg.stage_channels()
        self.patch_embed = PatchEmbed(cfg.embed_dim, rng, cfg.patch_size)
        self.encoder = _Encoder(cfg, rng)
        self.bottleneck = _Bottleneck(cfg, rng)
        self.decoder = _Decoder(cfg, rng)
        self.final = _FinalExpand(cfg, rng)
        self.head = Linear(cfg.embed_dim // 4, cfg.num_classes, rng)
        self.params = self.bind_names()

    def _check(self, f: FeatureMap, res: int, ch: int, where: str) -> None:
        if (f.height, f.width, f.channels) != (res, res, ch):
            raise DimensionError(
                f"{where}: expected {res}x{res}x{ch}, got {f.height}x{f.width}x{f.channels}"
            )

    def forward(self, image: np.ndarray, zero_skips: bool = False) -> Tensor:
        """Run the network; returns logits shaped [H, W, num_classes]."""
        cfg = self.cfg
        s = cfg.input_size
        if image.shape[:2] != (s, s):
            raise DimensionError(f"expected a {s}x{s} input, got {image.shape[0]}x{image.shape[1]}")
        res = cfg.stage_resolutions()
        ch = cfg.stage_channels()

        f = self.patch_embed(image)
        self._check(f, res[0], ch[0], "patch embed")
        skips: list[FeatureMap] = []
        for i in range(4):
            f = self.encoder.stage[i](f)
            self._check(f, res[i], ch[i], f"encoder stage {i}")
            if i < 3:
                skips.append(f)
                f = self.encoder.merge[i](f)
                self._check(f, res[i + 1], ch[i + 1], f"patch merge {i}")
        f = self.bottleneck(f)
        self._check(f, res[3], ch[3], "bottleneck")

        for k in range(3):
            f = self.decoder.stage[k](f, skips[2 - k], zero_skip=zero_skips)
            self._check(f, res[2 - k], ch[2 - k], f"decoder stage {k}")

        f = self.final(f)
        self._check(f, s, cfg.embed_dim // 4, "final expansion")
        logits = self.head(f.data)                      # [H*W, N]
        return logits.reshape(s, s, cfg.num_classes)

    __call__ = forward

    def predict(self, image: np.ndarray) -> np.ndarray:
        """Per-pixel argmax class map; ties break toward the lowest class id."""
        logits = self.forward(image)
        if not np.isfinite(logits.data).all():
            culprit = first_nonfinite(logits) or "unknown"
            raise ContractError(f"non-finite logits during inference (first offending op: {culprit})")
        return np.argmax(logits.data, axis=-1).astype(np.uint8)


def build_model(cfg: ModelConfig, rng: Rng) -> BenthiqNet:
    return BenthiqNet(cfg, rng)


# -- checkpoint container ------------------------------------------------------
#
# Layout: magic, one JSON text line (version, config, seed, epoch, record
# count), then per parameter: u16 name length, name bytes, u8 rank, u32
# extents, raw little-endian float32 values, raw float32 momentum.  A short
# trailer guards against truncation.

CHECKPOINT_TRAILER = b"BENTHIQ-END"


def save_checkpoint(model: BenthiqNet, path, epoch: int | None = None, names=None) -> None:
    """Write parameters, momentum buffers, config, and seed; `names` filters
    which parameters are stored (for partial, encoder-only exports)."""
    items = [(n, p) for n, p in model.params.items() if names is None or n in set(names)]
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "seed": model.seed,
        "epoch": model.epoch if epoch is None else int(epoch),
        "records": len(items),
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name, p in items:
            raw = name.encode("utf-8")
            arr = p.tensor.data
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4", copy=False).tobytes())
            fh.write(p.momentum.astype("<f4", copy=False).tobytes())
        fh.write(CHECKPOINT_TRAILER)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path, allow_partial: bool = False,
                    expect: ModelConfig | None = None) -> BenthiqNet:
    """Rebuild the model saved at `path`; bit-exact parameter round trip.

    With `allow_partial`, parameters absent from the file keep their fresh
    seeded initialization.  `expect` cross-checks the stored config against
    the caller's and raises ConfigError on any mismatch.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC) + 1)
        if magic != CHECKPOINT_MAGIC + b"\n":
            raise CheckpointError(f"not a checkpoint file: bad magic in {path}")
        header_line = fh.readline()
        if not header_line.endswith(b"\n"):
            raise CheckpointError("truncated checkpoint while reading header")
        try:
            header = json.loads(header_line.decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
        version = header.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format version {version} (expected {CHECKPOINT_VERSION})"
            )
        cfg = ModelConfig.from_dict(header["config"])
        if expect is not None:
            mismatched = [
                f for f in ("embed_dim", "depths", "heads", "window_size", "patch_size",
                            "num_classes", "input_size", "upsampling", "variant",
                            "use_relative_bias")
                if getattr(cfg, f) != getattr(expect, f)
            ]
            if mismatched:
                detail = ", ".join(
                    f"{f}: checkpoint={getattr(cfg, f)!r} expected={getattr(expect, f)!r}"
                    for f in mismatched
                )
                raise ConfigError(f"checkpoint config mismatch ({detail})")

        model = BenthiqNet(cfg, Rng(header["seed"]))
        model.epoch = int(header.get("epoch", 0))
        loaded: set[str] = set()
        for _ in range(int(header["records"])):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "record name length"))
            name = _read_exact(fh, name_len, "record name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "record rank"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "record extents"))
            if name not in model.params:
                raise CheckpointError(f"unknown parameter name in checkpoint: {name!r}")
            p = model.params[name]
            if tuple(shape) != p.tensor.shape:
                raise CheckpointError(
                    f"parameter {name!r} has shape {tuple(shape)} in file, model expects {p.tensor.shape}"
                )
            count = int(np.prod(shape)) if shape else 1
            values = np.frombuffer(_read_exact(fh, 4 * count, f"values of {name!r}"), dtype="<f4")
            momentum = np.frombuffer(_read_exact(fh, 4 * count, f"momentum of {name!r}"), dtype="<f4")
            p.tensor.data = values.reshape(shape).astype(np.float32)
            p.momentum = momentum.reshape(shape).astype(np.float32)
            loaded.add(name)
        trailer = fh.read(len(CHECKPOINT_TRAILER))
        if trailer != CHECKPOINT_TRAILER:
            raise CheckpointError("truncated checkpoint: trailer missing")
    missing = [n for n in model.params if n not in loaded]
    if missing and not allow_partial:
        raise CheckpointError(
            f"checkpoint is missing {len(missing)} parameters (e.g. {missing[0]!r}); "
            "pass allow_partial=True to keep fresh initialization for them"
        )
    return model
