"""Windowed-attention building blocks.

Feature maps are token grids stored as [height*width, channels] tensors in
row-major token order.  Attention runs inside non-overlapping MxM windows;
the shifted variant rolls the grid by -M//2 and masks token pairs that come
from different pre-shift windows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .nn import LayerNorm, Linear, Module
from .tensor import Rng, Tensor

MASK_FILL = -1e4


@dataclass
class FeatureMap:
    """Token grid: `data` is [height*width, channels], row-major."""

    height: int
    width: int
    channels: int
    data: Tensor

    def __post_init__(self):
        if self.data.shape != (self.height * self.width, self.channels):
            raise DimensionError(
                f"feature map {self.height}x{self.width}x{self.channels} "
                f"does not match tensor shape {self.data.shape}"
            )


@dataclass
class WindowSet:
    """Tokens regrouped into windows: `tokens` is [num_windows, M*M, channels]."""

    num_windows: int
    window: int
    channels: int
    tokens: Tensor
    origin: tuple[int, int]


def window_partition(f: FeatureMap, window: int) -> WindowSet:
    """Group tokens into non-overlapping MxM windows, row-major throughout."""
    h, w, c = f.height, f.width, f.channels
    if h % window or w % window:
        raise DimensionError(f"grid {h}x{w} not divisible by window size {window}")
    nh, nw = h // window, w // window
    x = f.data.reshape(nh, window, nw, window, c)
    x = x.permute(0, 2, 1, 3, 4)                      # [nh, nw, M, M, C]
    x = x.reshape(nh * nw, window * window, c)        # [nW, M*M, C]
    return WindowSet(nh * nw, window, c, x, (h, w))


def window_reverse(ws: WindowSet) -> FeatureMap:
    """Exact inverse of `window_partition`."""
    h, w = ws.origin
    m, c = ws.window, ws.channels
    if ws.num_windows != (h // m) * (w // m):
        raise DimensionError(
            f"window set of {ws.num_windows} windows inconsistent with origin {h}x{w}, M={m}"
        )
    nh, nw = h // m, w // m
    x = ws.tokens.reshape(nh, nw, m, m, c)
    x = x.permute(0, 2, 1, 3, 4)                      # [nh, M, nw, M, C]
    x = x.reshape(h * w, c)
    return FeatureMap(h, w, c, x)


def cyclic_shift(f: FeatureMap, offset: int) -> FeatureMap:
    """Roll the token grid by (-offset, -offset); call with -offset to invert."""
    if abs(offset) >= min(f.height, f.width):
        raise DimensionError(f"shift offset {offset} too large for grid {f.height}x{f.width}")
    if offset == 0:
        return f
    x = f.data.reshape(f.height, f.width, f.channels)
    x = T.roll(x, (-offset, -offset), axes=(0, 1))
    return replace(f, data=x.reshape(f.height * f.width, f.channels))


def shift_window_ids(height: int, width: int, window: int, offset: int) -> np.ndarray:
    """Pre-shift window id of every token of the post-shift grid, shape [H, W]."""
    pre_r = (np.arange(height)[:, None] + offset) % height
    pre_c = (np.arange(width)[None, :] + offset) % width
    return (pre_r // window) * (width // window) + (pre_c // window)


def build_shift_mask(height: int, width: int, window: int, offset: int) -> Tensor:
    """Additive attention bias [nW, M*M, M*M]: 0 for same-origin pairs, -1e4 otherwise."""
    if height % window or width % window:
        raise DimensionError(f"grid {height}x{width} not divisible by window size {window}")
    if not 0 <= offset < window:
        raise DimensionError(f"offset {offset} out of range for window size {window}")
    ids = shift_window_ids(height, width, window, offset).astype(np.int64)
    grid = FeatureMap(height, width, 1, Tensor(ids[:, :, None].reshape(-1, 1)))
    wins = window_partition(grid, window).tokens.data.reshape(-1, window * window)
    same = wins[:, :, None] == wins[:, None, :]
    mask = np.where(same, 0.0, MASK_FILL).astype(np.float32)
    return Tensor(mask)


class RelativePositionBias(Module):
    """Learnable (2M-1)^2 x heads table, re-indexed to a [heads, M*M, M*M] bias."""

    def __init__(self, window: int, heads: int):
        span = 2 * window - 1
        self.table = T.Parameter(np.zeros((span * span, heads), dtype=np.float32))
        coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"))
        flat = coords.reshape(2, -1)                              # [2, M*M]
        rel = flat[:, :, None] - flat[:, None, :] + (window - 1)  # offsets in [0, 2M-2]
        self.index = rel[0] * span + rel[1]                       # [M*M, M*M]
        self.heads = heads

    def __call__(self) -> Tensor:
        bias = T.gather_rows(self.table.tensor, self.index)       # [M*M, M*M, heads]
        return bias.permute(2, 0, 1)


class WindowAttention(Module):
    """Multi-head scaled dot-product attention inside each window."""

    def __init__(self, dim: int, heads: int, window: int, rng: Rng, use_bias_table: bool = True):
        if dim % heads:
            raise ConfigError(f"channels {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.rpb = RelativePositionBias(window, heads) if use_bias_table else None

    def __call__(self, tokens: Tensor, mask: Tensor | None = None) -> Tensor:
        nw, t, c = tokens.shape
        h, d = self.heads, self.head_dim
        qkv = self.qkv(tokens)                                    # [nW, T, 3C]
        qkv = qkv.reshape(nw, t, 3, h, d).permute(2, 0, 3, 1, 4)  # [3, nW, h, T, d]
        q = T.slice_axis(qkv, 0, 0, 1).reshape(nw, h, t, d)
        k = T.slice_axis(qkv, 0, 1, 2).reshape(nw, h, t, d)
        v = T.slice_axis(qkv, 0, 2, 3).reshape(nw, h, t, d)
        attn = T.matmul(q * self.scale, k.permute(0, 1, 3, 2))    # [nW, h, T, T]
        if self.rpb is not None:
            attn = attn + self.rpb().reshape(1, h, t, t)
        if mask is not None:
            attn = attn + mask.reshape(nw, 1, t, t)
        attn = T.softmax(attn, axis=-1)
        out = T.matmul(attn, v)                                   # [nW, h, T, d]
        out = out.permute(0, 2, 1, 3).reshape(nw, t, c)
        return self.proj(out)


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: Rng):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class SwinBlock(Module):
    """LN -> (S)W-MSA -> residual, then LN -> MLP(GELU) -> residual.

    The shifted variant wraps attention in a cyclic shift with the matching
    mask.  When the whole grid fits a single window there is nothing to
    shift across, so the offset degenerates to 0 and the block equals its
    unshifted twin.
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        window: int,
        shifted: bool,
        rng: Rng,
        mlp_ratio: int = 4,
        use_bias_table: bool = True,
    ):
        self.window = window
        self.shifted = shifted
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, rng, use_bias_table)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio * dim, rng)
        self._masks: dict[tuple[int, int], Tensor] = {}

    def _offset(self, h: int, w: int) -> int:
        if not self.shifted or min(h, w) <= self.window:
            return 0
        return self.window // 2

    def _mask(self, h: int, w: int, offset: int) -> Tensor:
        key = (h, w)
        if key not in self._masks:
            self._masks[key] = build_shift_mask(h, w, self.window, offset)
        return self._masks[key]

    def __call__(self, f: FeatureMap) -> FeatureMap:
        h, w, c = f.height, f.width, f.channels
        offset = self._offset(h, w)
        shortcut = f.data
        x = self.norm1(f.data)
        fm = FeatureMap(h, w, c, x)
        if offset:
            fm = cyclic_shift(fm, offset)
        ws = window_partition(fm, self.window)
        mask = self._mask(h, w, offset) if offset else None
        ws = replace(ws, tokens=self.attn(ws.tokens, mask))
        fm = window_reverse(ws)
        if offset:
            fm = cyclic_shift(fm, -offset)
        x = shortcut + fm.data
        x = x + self.mlp(self.norm2(x))
        return FeatureMap(h, w, c, x)


class PatchEmbed(Module):
    """Non-overlapping PxP patches -> flattened pixel vectors -> linear -> LN.

    Pixels are mapped from [0, 255] to [-1, 1] before projection.
    """

    def __init__(self, embed_dim: int, rng: Rng, patch: int = 4):
        self.patch = patch
        self.embed_dim = embed_dim
        self.proj = Linear(patch * patch * 3, embed_dim, rng)
        self.norm = LayerNorm(embed_dim)

    def __call__(self, image: np.ndarray) -> FeatureMap:
        if image.ndim != 3 or image.shape[2] != 3:
            raise DimensionError(f"expected an HxWx3 image, got shape {image.shape}")
        h, w = image.shape[:2]
        p = self.patch
        if h % p or w % p:
            raise DimensionError(f"image {h}x{w} not divisible by patch size {p}")
        scaled = image.astype(np.float32) / 127.5 - 1.0
        x = Tensor(scaled.reshape(h // p, p, w // p, p, 3))
        x = x.permute(0, 2, 1, 3, 4).reshape((h // p) * (w // p), p * p * 3)
        x = self.norm(self.proj(x))
        return FeatureMap(h // p, w // p, self.embed_dim, x)


class PatchMerge(Module):
    """2x2 token groups concatenated to 4c, layer-normed, projected to 2c."""

    def __init__(self, dim: int, rng: Rng):
        self.norm = LayerNorm(4 * dim)
        self.reduction = Linear(4 * dim, 2 * dim, rng, bias=False)

    def __call__(self, f: FeatureMap) -> FeatureMap:
        h, w, c = f.height, f.width, f.channels
        if h % 2 or w % 2:
            raise DimensionError(f"patch merge needs even extents, got {h}x{w}")
        x = f.data.reshape(h // 2, 2, w // 2, 2, c)
        x = x.permute(0, 2, 1, 3, 4)                   # [h/2, w/2, 2, 2, c]
        x = x.reshape((h // 2) * (w // 2), 4 * c)
        x = self.reduction(self.norm(x))
        return FeatureMap(h // 2, w // 2, 2 * c, x)


def split_rearrange(x: Tensor, h: int, w: int) -> Tensor:
    """[h*w, 2c] -> [2h*2w, c/2]: each token's vector becomes a 2x2 spatial
    block of c/2 channels, row-major.  A pure re-indexing, hence a bijection."""
    half = x.shape[-1] // 4
    x = x.reshape(h, w, 2, 2, half)
    x = x.permute(0, 2, 1, 3, 4)                       # [h, 2, w, 2, c/2]
    return x.reshape(2 * h * 2 * w, half)


class PatchSplit(Module):
    """Linear c -> 2c, then each token unfolds into a 2x2 block of c/2
    channels; layer norm after the rearrange keeps the decoder path at unit
    scale (mirroring the norm inside patch merging)."""

    def __init__(self, dim: int, rng: Rng):
        if dim % 2:
            raise DimensionError(f"patch split needs even channels, got {dim}")
        self.expand = Linear(dim, 2 * dim, rng, bias=False)
        self.norm = LayerNorm(dim // 2)

    def __call__(self, f: FeatureMap) -> FeatureMap:
        h, w, c = f.height, f.width, f.channels
        if c % 2:
            raise DimensionError(f"patch split needs even channels, got {c}")
        x = split_rearrange(self.expand(f.data), h, w)  # [2h*2w, c/2]
        x = self.norm(x)
        return FeatureMap(2 * h, 2 * w, c // 2, x)


def cubic_kernel(d: float, a: float = -0.5) -> float:
    """Keys cubic convolution kernel."""
    d = abs(d)
    if d <= 1.0:
        return (a + 2.0) * d**3 - (a + 3.0) * d**2 + 1.0
    if d < 2.0:
        return a * (d**3 - 5.0 * d**2 + 8.0 * d - 4.0)
    return 0.0


def upsample_matrix(n: int) -> np.ndarray:
    """[2n, n] bicubic interpolation weights; out row i samples input at i/2.

    Border taps are clamped to the grid, so constants are reproduced exactly.
    """
    mat = np.zeros((2 * n, n), dtype=np.float32)
    for i in range(2 * n):
        src = i / 2.0
        base = math.floor(src)
        t = src - base
        for tap in range(-1, 3):
            j = min(max(base + tap, 0), n - 1)
            mat[i, j] += cubic_kernel(t - tap)
    return mat


class BicubicUpsample(Module):
    """Channelwise bicubic 2x upsampling followed by a linear c -> c/2 projection."""

    def __init__(self, dim: int, rng: Rng):
        if dim % 2:
            raise DimensionError(f"bicubic upsample needs even channels, got {dim}")
        self.reduce = Linear(dim, dim // 2, rng)
        self.norm = LayerNorm(dim // 2)
        self._mats: dict[int, Tensor] = {}

    def _mat(self, n: int) -> Tensor:
        if n not in self._mats:
            self._mats[n] = Tensor(upsample_matrix(n))
        return self._mats[n]

    def __call__(self, f: FeatureMap) -> FeatureMap:
        h, w, c = f.height, f.width, f.channels
        if c % 2:
            raise DimensionError(f"bicubic upsample needs even channels, got {c}")
        x = f.data.reshape(h, w, c).permute(2, 0, 1)   # [c, h, w]
        x = T.matmul(self._mat(h), x)                  # [c, 2h, w]
        x = T.matmul(x, self._mat(w).permute(1, 0))    # [c, 2h, 2w]
        x = x.permute(1, 2, 0).reshape(2 * h * 2 * w, c)
        x = self.norm(self.reduce(x))
        return FeatureMap(2 * h, 2 * w, c // 2, x)
