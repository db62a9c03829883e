"""The headline experiment at desk scale: train the concatenated two-branch
model and the image-only baseline on the same ambiguous-pairs data, then
compare. Image-only is capped near 50% here (every class sits in a pair);
the fused model escapes the cap through the keypoint branch.

Runs in a couple of minutes on one CPU core; the full-scale version lives in
tests/test_acceptance.py.
"""
import tempfile
from pathlib import Path

from bdslnet import (
    ModelConfig,
    SynthConfig,
    TrainConfig,
    build_concatenated,
    build_image_only,
    comparison_table,
    evaluate,
    fit,
    generate_synthetic,
    scan_dataset,
    split_train_val,
)

root = Path(tempfile.mkdtemp(prefix="bdslnet_fusion_"))
data_cfg = SynthConfig(classes=4, ambiguous_pairs=2, train_n=400, test_n=80,
                       noise=0.015, seed=42)
generate_synthetic(data_cfg, root)
print(f"data: {data_cfg.classes} classes, all in ambiguous pairs, under {root}")

train_m, val_m = split_train_val(scan_dataset(root / "train"), 40, seed=0)
test_m = scan_dataset(root / "test", split="test")

model_cfg = ModelConfig(
    conv_channels=(4, 4, 8, 8, 16, 16, 16, 16, 32, 32),
    image_fc_widths=(64, 64),
    pose_fc_widths=(32, 32),
    head_widths=(64, 32),
    num_classes=data_cfg.classes,
    seed=1,
)
train_cfg = TrainConfig(max_epochs=20, seed=42)

columns = {}
for name, build in (("concatenated", build_concatenated), ("image_only", build_image_only)):
    print(f"training {name} ...")
    net, history = fit(build(model_cfg), train_m, val_m, train_cfg)
    report = evaluate(net, test_m)
    columns[name] = {
        "train_acc": history[-1].train_acc,
        "val_acc": max(r.val_acc for r in history),
        "test_acc": report.accuracy,
        "epochs": len(history),
    }
    print(f"  test accuracy = {report.accuracy:.4f} after {len(history)} epochs")
    if report.confused_pairs:
        worst = report.confused_pairs[0]
        print(f"  most confused: true {worst[0]} -> predicted {worst[1]} ({worst[2]} times)")

print()
print(comparison_table(columns))
gap = columns["concatenated"]["test_acc"] - columns["image_only"]["test_acc"]
print(f"\nfusion benefit (concatenated - image_only): {gap:+.4f}")
