#!/usr/bin/env python3
"""Windowed attention mechanics: partitioning a token grid, the cyclic shift,
and the additive mask that keeps shifted windows from attending across
pre-shift boundaries.
"""
import numpy as np

from benthiq import tensor as T
from benthiq.blocks import (
    MASK_FILL,
    FeatureMap,
    build_shift_mask,
    cyclic_shift,
    shift_window_ids,
    window_partition,
    window_reverse,
)
from benthiq.tensor import Rng, Tensor

H = W = 8
M = 4
OFFSET = M // 2

print(f"== an {H}x{W} grid of labeled tokens, window size {M} ==")
labels = np.arange(H * W, dtype=np.float32).reshape(H * W, 1)
grid = FeatureMap(H, W, 1, Tensor(labels))
print(labels.reshape(H, W).astype(int))

ws = window_partition(grid, M)
print(f"\npartitioned into {ws.num_windows} windows of {M * M} tokens; window 0 holds:")
print(ws.tokens.data[0, :, 0].reshape(M, M).astype(int))

back = window_reverse(ws)
print("partition -> reverse is the identity:", np.array_equal(back.data.data, labels))

print(f"\n== cyclic shift by -{OFFSET} (toroidal) ==")
shifted = cyclic_shift(grid, OFFSET)
print(shifted.data.data.reshape(H, W).astype(int))
print("token (0,0) now holds former "
      f"({OFFSET},{OFFSET}) = {int(shifted.data.data.reshape(H, W)[0, 0])}")

print("\n== pre-shift window ids of the shifted grid ==")
ids = shift_window_ids(H, W, M, OFFSET)
print(ids)

print("\n== the attention mask for the bottom-right window ==")
mask = build_shift_mask(H, W, M, OFFSET)
corner = mask.data[-1]
blocked = (corner == MASK_FILL)
print(f"blocked token pairs: {int(blocked.sum())} of {corner.size}")
print("row 0 of the mask as allow(.)/block(x):")
print("".join("." if v == 0.0 else "x" for v in corner[0]))

print("\n== masked pairs vanish after softmax ==")
logits = Tensor(Rng(3).normal(mask.shape))
p = T.softmax(logits + mask, axis=-1).data
print(f"max attention weight across blocked pairs: {p[mask.data == MASK_FILL].max():.2e}")
print(f"rows still sum to one: {np.abs(p.sum(-1) - 1).max():.2e}")
