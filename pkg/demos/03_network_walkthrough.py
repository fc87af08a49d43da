#!/usr/bin/env python3
"""Build the U-shaped network and walk its dimension chain: four encoder
stages with patch merging, a two-block bottleneck, three decoder stages with
patch splitting and skip fusion, then two final splits back to full
resolution.
"""
import numpy as np

from benthiq import Rng, build_model, desk_config, swin_t_config
from benthiq.synth import generate_tile
from benthiq.tensor import no_grad

for cfg, label in ((desk_config(), "desk (trains on a CPU)"),
                   (swin_t_config(), "paper-scale tiny variant")):
    print(f"== {label}: embed {cfg.embed_dim}, depths {cfg.depths}, "
          f"window {cfg.window_size}, input {cfg.input_size} ==")
    res = cfg.stage_resolutions()
    ch = cfg.stage_channels()
    s = cfg.input_size
    chain = [f"{s}x{s}x3"] + [f"{r}x{r}x{c}" for r, c in zip(res, ch)]
    print("encoder chain:", "  ->  ".join(chain))
    dec = [f"{r}x{r}x{c}" for r, c in zip(res[::-1][1:], ch[::-1][1:])]
    final = [f"{s // 2}x{s // 2}x{cfg.embed_dim // 2}",
             f"{s}x{s}x{cfg.embed_dim // 4}", f"{s}x{s}x{cfg.num_classes}"]
    print("decoder chain:", "  ->  ".join([chain[-1]] + dec + final))

    model = build_model(cfg, Rng(1234))
    print(f"parameters: {model.param_count():,}")
    if cfg.input_size <= 128:
        image, mask = generate_tile(Rng(5), size=cfg.input_size)
        with no_grad():
            logits = model.forward(image)
        pred = model.predict(image)
        print(f"forward on a synthetic tile: logits {logits.shape}, "
              f"prediction classes {sorted(int(v) for v in np.unique(pred))}")
    print()

print("checkpoints round-trip bit-exactly; see tests/test_model.py for the contracts")
