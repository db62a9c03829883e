"""Scratch driver: acceptance-scale fusion experiment timing/accuracy probe."""
import json
import time
from pathlib import Path

from bdslnet import cli

root = Path("/tmp/fusion_probe")
root.mkdir(exist_ok=True)
data = root / "data"

slim = {
    "model": {
        "conv_channels": [4, 4, 8, 8, 16, 16, 16, 16, 32, 32],
        "image_fc_widths": [64, 64],
        "pose_fc_widths": [32, 32],
        "head_widths": [64, 32],
    },
    "train": {"batch_size": 32},
}
cfg_path = root / "slim.json"
cfg_path.write_text(json.dumps(slim))

t0 = time.time()
if not data.exists():
    rc = cli.main(["synth", "--out", str(data)])
    assert rc == 0
t1 = time.time()
print(f"[timing] synth: {t1 - t0:.1f}s", flush=True)

for model in ("image-only", "concat"):
    t = time.time()
    ckpt = root / f"{model}.bdsl"
    rc = cli.main(["train", "--data", str(data / "train"), "--model", model,
                   "--epochs", "30", "--out", str(ckpt),
                   "--config", str(cfg_path), "--seed", "42", "--val-frac", "0.1"])
    assert rc == 0, model
    print(f"[timing] train {model}: {time.time() - t:.1f}s", flush=True)
    t = time.time()
    rc = cli.main(["eval", "--data", str(data / "test"), "--ckpt", str(ckpt),
                   "--report", str(root / f"report_{model}")])
    assert rc == 0
    print(f"[timing] eval {model}: {time.time() - t:.1f}s", flush=True)

for model in ("image-only", "concat"):
    doc = json.loads((root / f"report_{model}" / "report.json").read_text())
    print(f"[result] {model}: test accuracy = {doc['accuracy']:.4f}", flush=True)
print(f"[timing] total: {time.time() - t0:.1f}s", flush=True)
