"""The synthetic ambiguous-pairs dataset.

Classes come in pairs that render pixel-identical images (same skeleton
template) while keeping distinct keypoint sidecars, so only a model that
reads the keypoints can tell them apart. A contact sheet of one sample per
class is written next to the generated tree.
"""
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from bdslnet import SynthConfig, generate_synthetic, load_image, load_keypoints, scan_dataset

root = Path(tempfile.mkdtemp(prefix="bdslnet_synth_"))
cfg = SynthConfig(classes=6, ambiguous_pairs=2, train_n=60, test_n=12, noise=0.0, seed=7)
generate_synthetic(cfg, root)
print(f"generated {cfg.classes} classes under {root} (noise=0 to show the pairing)")

manifest = scan_dataset(root / "train")
print("classes:", manifest.classes)

# first sample of each class, side by side
tiles = []
for cid, label in enumerate(manifest.classes):
    item = next(it for it in manifest.items if it.class_id == cid)
    tiles.append((load_image(item.image_path).data[0] * 255).astype(np.uint8))
sheet = np.concatenate(tiles, axis=1)
out = root / "contact_sheet.png"
Image.fromarray(sheet, mode="L").save(out)
print(f"contact sheet (classes left to right): {out}")

# the pair (c00, c01) is pixel-identical at noise=0 ...
a = load_image(manifest.items[0].image_path).data
b = next(load_image(it.image_path).data for it in manifest.items if it.class_id == 1)
print("c00 vs c01 images identical:", bool(np.array_equal(a, b)))

# ... but their keypoints differ, which is the whole point
kp_a, _ = load_keypoints(manifest.items[0].keypoint_path)
kp_b, _ = next(load_keypoints(it.keypoint_path)
               for it in manifest.items if it.class_id == 1)
print("c00 vs c01 keypoints identical:", bool(np.array_equal(kp_a.data, kp_b.data)))
print("mean |kp difference| =", float(np.abs(kp_a.data - kp_b.data).mean().round(4)))
