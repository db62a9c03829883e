"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the criterion lines.
The fusion-benefit criterion trains two models on the synthetic default
dataset and takes a few minutes on one CPU core; everything else is fast.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from bdslnet import cli
from bdslnet import data as D
from bdslnet import model as M
from bdslnet import train as T
from bdslnet.gradcheck import TOLERANCE, run_suite
from bdslnet.layers import softmax_xent
from bdslnet.tensor import F32, F64, Tensor

SLIM_MODEL = {
    "conv_channels": [4, 4, 8, 8, 16, 16, 16, 16, 32, 32],
    "image_fc_widths": [64, 64],
    "pose_fc_widths": [32, 32],
    "head_widths": [64, 32],
}

MICRO_MODEL = {
    "conv_channels": [2, 2, 4, 4, 4, 4, 8, 8, 8, 8],
    "image_fc_widths": [16, 8],
    "pose_fc_widths": [8, 8],
    "head_widths": [8, 8],
}


def _criterion(name, ok, detail=""):
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


@pytest.fixture(scope="session")
def synth_default_data(tmp_path_factory):
    """The synthetic dataset at its defaults: K=8, P=4, 1600/400, sigma=0.015,
    seed 42."""
    root = tmp_path_factory.mktemp("synth_default") / "data"
    assert cli.main(["synth", "--out", str(root)]) == 0
    return root


def _config_file(path, model_dict, train_dict=None):
    doc = {"model": model_dict}
    if train_dict:
        doc["train"] = train_dict
    path.write_text(json.dumps(doc))
    return path


# --------------------------------------------------------------------------
# Criterion 1: gradient suite, every layer kind, rel err < 1e-4 at f64,
# >= 5 seeds x >= 3 shapes, `gradcheck` exits 0, < 60 s.

def test_gradient_suite(capsys):
    t0 = time.time()
    results = run_suite(seed=0, n_seeds=5)
    worst = max(results.values())
    for kind in ("conv2d", "batchnorm", "maxpool", "dense", "relu", "elu", "softmax_xent"):
        assert kind in results
        assert results[kind] < TOLERANCE, f"{kind}: {results[kind]}"
    rc = cli.main(["gradcheck", "--seed", "0"])
    elapsed = time.time() - t0
    out = capsys.readouterr().out
    with capsys.disabled():
        for kind in ("conv2d", "batchnorm", "maxpool", "dense", "relu", "elu", "softmax_xent"):
            assert kind in out
        _criterion("gradient suite", rc == 0 and worst < TOLERANCE and elapsed < 60,
                   f"worst rel err {worst:.2e}, gradcheck exit {rc}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# Criterion 2: Adam matches an independent scalar recurrence to 1e-12 over
# 5 steps on theta^2; first step magnitude ~ lr*sign(g) within eps*lr.

def test_optimizer_oracle():
    cfg = T.TrainConfig()

    theta, m, v = 1.0, 0.0, 0.0
    oracle = []
    for t in range(1, 6):
        g = 2.0 * theta
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        theta -= cfg.lr0 * (m / (1 - cfg.beta1 ** t)) / (
            math.sqrt(v / (1 - cfg.beta2 ** t)) + cfg.eps)
        oracle.append(theta)

    p = Tensor(np.array([1.0], dtype=F64))
    state = T.TrainState(lr=cfg.lr0)
    worst = 0.0
    for t in range(5):
        T.adam_step([("p", p)], {p: Tensor(2.0 * p.data)}, state, cfg)
        worst = max(worst, abs(float(p.data[0]) - oracle[t]))

    q = Tensor(np.array([0.5], dtype=F64))  # gradient of theta^2 is exactly 1
    state2 = T.TrainState(lr=cfg.lr0)
    T.adam_step([("q", q)], {q: Tensor(2.0 * q.data)}, state2, cfg)
    first_step_err = abs(abs(float(q.data[0]) - 0.5) - cfg.lr0)

    _criterion("optimizer oracle",
               worst < 1e-12 and first_step_err <= cfg.eps * cfg.lr0 * 1.01,
               f"5-step max err {worst:.2e}, first-step magnitude err {first_step_err:.2e}")


# --------------------------------------------------------------------------
# Criterion 3: cold-start loss of a fresh 38-class model = ln(38) +- 0.15.

def test_cold_start_loss():
    net = M.build_concatenated(M.ModelConfig(seed=1))
    rng = np.random.default_rng(0)
    imgs = Tensor(rng.random((32, 1, 64, 64)).astype(F32))
    kps = Tensor(rng.random((32, 42)).astype(F32))
    labels = rng.integers(0, 38, size=32)
    logits = net.forward_logits(imgs, kps, mode="train")
    _, loss = softmax_xent(logits, labels)
    err = abs(loss.item() - math.log(38.0))
    _criterion("cold-start loss", err <= 0.15,
               f"first-batch loss {loss.item():.4f} vs ln(38)={math.log(38.0):.4f}")


# --------------------------------------------------------------------------
# Criterion 4: image-only model reaches 100% train accuracy on a 64-sample
# synthetic subset within 200 epochs, < 5 min.

def test_overfit_sanity(synth_default_data):
    t0 = time.time()
    manifest = D.scan_dataset(synth_default_data / "train")
    by_class = {}
    for it in manifest.items:
        by_class.setdefault(it.class_id, []).append(it)
    train_items = [it for c in sorted(by_class) for it in by_class[c][:8]]
    val_items = [it for c in sorted(by_class) for it in by_class[c][8:10]]
    train_m = D.DatasetManifest(manifest.root, manifest.classes, train_items, "train")
    val_m = D.DatasetManifest(manifest.root, manifest.classes, val_items, "val")
    assert len(train_m.items) == 64

    model_cfg = M.ModelConfig(num_classes=8, seed=3, **{k: tuple(v) for k, v in SLIM_MODEL.items()})
    # schedule disabled so nothing can interrupt the memorization run
    train_cfg = T.TrainConfig(max_epochs=200, plateau_patience=200,
                              early_stop_patience=200, seed=0)
    net = M.build_image_only(model_cfg)
    _, history = T.fit(net, train_m, val_m, train_cfg)
    hits = [r.epoch for r in history if r.train_acc == 1.0]
    elapsed = time.time() - t0
    _criterion("overfit sanity", bool(hits) and elapsed < 300,
               f"100% train acc at epoch {hits[0] if hits else '-'}, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# Criterion 5: fusion benefit on synth defaults, <= 30 epochs: image-only
# test acc <= 0.65, concatenated >= 0.90, gap >= 0.25, < 15 min.

def test_fusion_beats_image_only(synth_default_data, tmp_path, capsys):
    t0 = time.time()
    cfg_file = _config_file(tmp_path / "slim.json", SLIM_MODEL)
    acc = {}
    for model in ("image-only", "concat"):
        out = tmp_path / model / "model.bdsl"
        rc = cli.main(["train", "--data", str(synth_default_data / "train"),
                       "--model", model, "--epochs", "30", "--out", str(out),
                       "--config", str(cfg_file), "--seed", "42", "--val-frac", "0.1"])
        assert rc == 0
        rc = cli.main(["eval", "--data", str(synth_default_data / "test"),
                       "--ckpt", str(out), "--report", str(tmp_path / model / "report")])
        assert rc == 0
        doc = json.loads((tmp_path / model / "report" / "report.json").read_text())
        acc[model] = doc["accuracy"]
    elapsed = time.time() - t0
    gap = acc["concat"] - acc["image-only"]
    capsys.readouterr()
    with capsys.disabled():
        _criterion("fusion benefit",
                   acc["image-only"] <= 0.65 and acc["concat"] >= 0.90
                   and gap >= 0.25 and elapsed < 900,
                   f"image-only {acc['image-only']:.4f} <= 0.65, "
                   f"concat {acc['concat']:.4f} >= 0.90, gap {gap:.4f} >= 0.25, "
                   f"{elapsed:.0f}s")


# --------------------------------------------------------------------------
# Criterion 6: two `train` runs with identical seed/config/data produce
# bit-identical history.csv and checkpoints.

def test_train_determinism(tmp_path):
    data = tmp_path / "data"
    assert cli.main(["synth", "--out", str(data), "--classes", "4", "--pairs", "2",
                     "--train", "32", "--test", "8", "--seed", "5"]) == 0
    cfg_file = _config_file(tmp_path / "micro.json", MICRO_MODEL, {"batch_size": 8})
    outputs = []
    for run in ("one", "two"):
        out = tmp_path / run / "model.bdsl"
        rc = cli.main(["train", "--data", str(data / "train"), "--model", "concat",
                       "--epochs", "3", "--out", str(out), "--config", str(cfg_file),
                       "--seed", "7", "--val-count", "8"])
        assert rc == 0
        outputs.append((out.read_bytes(), (out.parent / "history.csv").read_bytes()))
    same_ckpt = outputs[0][0] == outputs[1][0]
    same_history = outputs[0][1] == outputs[1][1]
    _criterion("determinism", same_ckpt and same_history,
               f"checkpoint identical: {same_ckpt}, history identical: {same_history}")


# --------------------------------------------------------------------------
# Criterion 7: format round-trips bit-exact; corrupted files always yield
# format errors (1000 fuzz cases across archive + checkpoint).

def test_formats_roundtrip_and_fuzz(tmp_path):
    rng = np.random.default_rng(99)

    tensors = {
        "w": Tensor(rng.normal(size=(6, 4)).astype(F32)),
        "b64": Tensor(rng.normal(size=(5,)).astype(F64)),
        "deep": Tensor(rng.normal(size=(2, 3, 2, 2)).astype(F32)),
    }
    apath = tmp_path / "a.ctns"
    D.write_archive(tensors, apath)
    back = D.read_archive(apath)
    archive_ok = all(back[k].data.tobytes() == tensors[k].data.tobytes() for k in tensors)

    cfg = M.ModelConfig(num_classes=3, seed=2, **{k: tuple(v) for k, v in MICRO_MODEL.items()})
    net = M.build_concatenated(cfg)
    net.class_labels = ["x", "y", "z"]
    cpath = tmp_path / "m.bdsl"
    M.save_checkpoint(net, cfg, cpath)
    loaded, _ = M.load_checkpoint(cpath)
    ckpt_ok = all(a.data.tobytes() == b.data.tobytes()
                  for (_, a), (_, b) in zip(net.named_tensors(), loaded.named_tensors()))

    failures = 0
    cases = 0
    for path, reader in ((apath, D.read_archive), (cpath, M.load_checkpoint)):
        pristine = path.read_bytes()
        scratch = tmp_path / ("fuzz" + path.suffix)
        for trial in range(500):
            blob = bytearray(pristine)
            if trial % 2 == 0:
                blob = blob[: int(rng.integers(0, len(pristine)))]
            else:
                pos = int(rng.integers(0, len(pristine)))
                blob[pos] ^= int(rng.integers(1, 256))
            scratch.write_bytes(bytes(blob))
            cases += 1
            try:
                reader(scratch)
                failures += 1
            except D.FormatError:
                pass
    _criterion("formats", archive_ok and ckpt_ok and failures == 0 and cases == 1000,
               f"roundtrips bit-exact, {cases} fuzz cases, {failures} undetected corruptions")


# --------------------------------------------------------------------------
# Criterion 8: protocol fidelity — defaults embody the training protocol
# (64x64 grayscale /255, 9959/1102 split from 11061, 30 epochs, Adam 0.001,
# plateau patience 4) and a comparison table is emitted for concat vs
# image-only on a user-style 38-class folder dataset. Structural only.

def test_protocol_fidelity(tmp_path, capsys):
    train_cfg = T.TrainConfig()
    model_cfg = M.ModelConfig()
    protocol_ok = (
        train_cfg.lr0 == 0.001
        and train_cfg.plateau_patience == 4
        and train_cfg.max_epochs == 30
        and model_cfg.input_hw == (64, 64)
        and model_cfg.image_channels == 1
        and model_cfg.num_classes == 38
    )

    # headline split: 11061 items -> 9959 train / 1102 val
    items = [D.Item(Path(f"/x/c{i % 38:02d}/f{i:06d}.png"), None, i % 38)
             for i in range(11061)]
    fake = D.DatasetManifest(Path("/x"), [f"c{c:02d}" for c in range(38)], items)
    tr, va = D.split_train_val(fake, 1102, seed=0)
    split_ok = len(tr.items) == 9959 and len(va.items) == 1102

    # preprocessing lands in [0,1] at 64x64 single-channel
    from PIL import Image

    img_path = tmp_path / "probe.png"
    Image.fromarray((np.arange(48 * 48).reshape(48, 48) % 256).astype(np.uint8)).save(img_path)
    probe = D.load_image(img_path)
    pre_ok = probe.shape == (1, 64, 64) and probe.data.min() >= 0 and probe.data.max() <= 1

    # user-style 38-class folder dataset with sidecars, both topologies,
    # ending in the side-by-side comparison table
    data = tmp_path / "bnfd_style"
    assert cli.main(["synth", "--out", str(data), "--classes", "38", "--pairs", "4",
                     "--train", "114", "--test", "38", "--seed", "11"]) == 0
    cfg_file = _config_file(tmp_path / "micro.json", MICRO_MODEL, {"batch_size": 8})
    columns = {}
    for model in ("concat", "image-only"):
        out = tmp_path / model / "model.bdsl"
        rc = cli.main(["train", "--data", str(data / "train"), "--model", model,
                       "--epochs", "2", "--out", str(out), "--config", str(cfg_file),
                       "--seed", "1", "--val-count", "38"])
        assert rc == 0
        rc = cli.main(["eval", "--data", str(data / "test"), "--ckpt", str(out),
                       "--report", str(tmp_path / model / "report")])
        assert rc == 0
        history = (out.parent / "history.csv").read_text().strip().splitlines()
        last = history[-1].split(",")
        report = json.loads((tmp_path / model / "report" / "report.json").read_text())
        columns[model] = {
            "train_acc": float(last[2]),
            "val_acc": float(last[4]),
            "test_acc": report["accuracy"],
            "epochs": len(history) - 1,
        }
    table = T.comparison_table(columns)
    table_ok = ("concat" in table and "image-only" in table
                and "Training accuracy" in table and "Validation accuracy" in table
                and "Testing accuracy" in table)
    capsys.readouterr()
    with capsys.disabled():
        print(table, flush=True)
        _criterion("protocol fidelity", protocol_ok and split_ok and pre_ok and table_ok,
                   "defaults (lr 0.001, patience 4, 30 epochs, 64x64 gray), "
                   "9959/1102 split, comparison table emitted")
