#!/usr/bin/env python3
"""The tiny-overfit experiment: the desk profile memorizes 8 synthetic tiles.

With lr 0.01, batch 4, and seed 1234 the train Dice loss crosses 0.05 around
epoch 90 (a couple of minutes on a laptop CPU).  EPOCHS below is capped for
a quicker demonstration; raise it to 200 to watch the full run.
"""
import sys
import tempfile
from pathlib import Path

from benthiq import Rng, build_model, desk_config
from benthiq.augment import AugmentationConfig
from benthiq.data import DatasetManifest, ManifestEntry
from benthiq.rasters import write_image, write_mask
from benthiq.synth import generate_tile, jitter_fractions
from benthiq.training import TrainSettings, train_model

EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 40

root = Path(tempfile.mkdtemp(prefix="benthiq_overfit_"))
(root / "images").mkdir()
(root / "masks").mkdir()
manifest = DatasetManifest(seed=1234, fractions=(0.25,) * 4, root=root)
for i in range(8):
    rng = Rng(1234).derive(10, i)
    image, mask = generate_tile(rng, jitter_fractions(rng, (0.25,) * 4), size=128)
    write_image(root / f"images/t{i}.ppm", image)
    write_mask(root / f"masks/t{i}.pgm", mask)
    manifest.entries.append(ManifestEntry(f"images/t{i}.ppm", f"masks/t{i}.pgm", "train"))

model = build_model(desk_config(), Rng(1234))
print(f"desk model: {model.param_count():,} parameters; training {EPOCHS} epochs on 8 tiles")

settings = TrainSettings(
    learning_rate=0.01, epochs=EPOCHS, batch_size=4, seed=1234,
    augment=AugmentationConfig(enabled=False),
    track_train_miou=True, early_stop_loss=0.05, early_stop_miou=90.0,
)


def log(epoch, key, value):
    if key == "train_dice_loss" and epoch % 5 == 0:
        print(f"epoch {epoch:3d}: dice loss {value:.4f}", flush=True)


result = train_model(model, manifest, settings, log_fn=log)
last = result.history[-1]
print(f"\nstopped at epoch {last['epoch']}: dice loss {last['train_dice_loss']:.4f}, "
      f"train mIOU {last['train_miou']:.2f}")
if result.stopped_early:
    print("early-stop thresholds reached (dice < 0.05 and mIOU > 90)")
else:
    print(f"raise EPOCHS (e.g. `python3 {Path(__file__).name} 200`) to reach the thresholds")
