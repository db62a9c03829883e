import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from bdslnet import cli, gradcheck, layers
from bdslnet.tensor import Tensor

MICRO_CONFIG = {
    "model": {
        "conv_channels": [2, 2, 4, 4, 4, 4, 8, 8, 8, 8],
        "image_fc_widths": [16, 8],
        "pose_fc_widths": [8, 8],
        "head_widths": [8, 8],
    },
    "train": {"batch_size": 4},
}


def _tree_hash(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def _synth(tmp_path, name="data", **over):
    out = tmp_path / name
    args = ["synth", "--out", str(out), "--classes", "4", "--pairs", "2",
            "--train", "16", "--test", "8", "--seed", "3"]
    for k, v in over.items():
        args += [f"--{k}", str(v)]
    assert cli.main(args) == 0
    return out


def _config_file(tmp_path):
    tmp_path.mkdir(parents=True, exist_ok=True)
    p = tmp_path / "micro.json"
    p.write_text(json.dumps(MICRO_CONFIG))
    return p


def _train(tmp_path, data, model="image-only", name="m.bdsl", epochs="2", extra=()):
    ckpt = tmp_path / name
    rc = cli.main(["train", "--data", str(data / "train"), "--model", model,
                   "--epochs", epochs, "--out", str(ckpt),
                   "--config", str(_config_file(tmp_path)),
                   "--seed", "7", "--val-count", "4", *extra])
    return rc, ckpt


# ------------------------------------------------------------------ usage

def test_unknown_flag_exits_1(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["synth", "--out", "x", "--bogus", "1"])
    assert e.value.code == 1


def test_missing_subcommand_exits_1():
    with pytest.raises(SystemExit) as e:
        cli.main([])
    assert e.value.code == 1


def test_synth_too_many_pairs_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as e:
        cli.main(["synth", "--out", str(tmp_path / "d"), "--classes", "8", "--pairs", "5"])
    assert e.value.code == 1


# ------------------------------------------------------------------ synth

def test_synth_writes_tree_and_prints_config(tmp_path, capsys):
    out = _synth(tmp_path)
    stdout = capsys.readouterr().out
    assert "resolved-config [synth]" in stdout
    classes = sorted(p.name for p in (out / "train").iterdir())
    assert classes == ["c00", "c01", "c02", "c03"]
    assert (out / "synth_manifest.json").exists()


def test_synth_same_seed_identical_tree(tmp_path):
    a = _synth(tmp_path, name="a")
    b = _synth(tmp_path, name="b")
    assert _tree_hash(a) == _tree_hash(b)


# ------------------------------------------------------------------ train

def test_train_writes_checkpoint_and_history(tmp_path, capsys):
    data = _synth(tmp_path)
    rc, ckpt = _train(tmp_path, data)
    assert rc == 0
    assert ckpt.exists()
    history = ckpt.parent / "history.csv"
    assert history.exists()
    lines = history.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc,lr"
    assert 2 <= len(lines) <= 3  # <= epochs + header
    assert "resolved-config [train]" in capsys.readouterr().out


def test_train_image_only_ignores_missing_sidecars(tmp_path):
    data = _synth(tmp_path)
    for sc in (data / "train").rglob("*.kp.json"):
        sc.unlink()
    rc, ckpt = _train(tmp_path, data, model="image-only")
    assert rc == 0


def test_train_concat_missing_sidecars_exits_2(tmp_path, capsys):
    data = _synth(tmp_path)
    for sc in (data / "train").rglob("*.kp.json"):
        sc.unlink()
    rc, _ = _train(tmp_path, data, model="concat")
    assert rc == 2
    assert "sidecar" in capsys.readouterr().err


def test_train_determinism_bit_identical_outputs(tmp_path):
    data = _synth(tmp_path)
    rc1, ckpt1 = _train(tmp_path / "r1", data, model="concat", name="a.bdsl")
    rc2, ckpt2 = _train(tmp_path / "r2", data, model="concat", name="b.bdsl")
    assert rc1 == rc2 == 0
    assert ckpt1.read_bytes() == ckpt2.read_bytes()
    assert (ckpt1.parent / "history.csv").read_bytes() == (ckpt2.parent / "history.csv").read_bytes()


def test_train_val_flags_mutually_exclusive(tmp_path):
    data = _synth(tmp_path)
    with pytest.raises(SystemExit) as e:
        cli.main(["train", "--data", str(data / "train"), "--model", "image-only",
                  "--out", str(tmp_path / "x.bdsl"), "--val-count", "4",
                  "--val-frac", "0.5"])
    assert e.value.code == 1


def test_train_bad_config_key_exits_2(tmp_path, capsys):
    data = _synth(tmp_path)
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"model": {"no_such_field": 1}}))
    rc = cli.main(["train", "--data", str(data / "train"), "--model", "image-only",
                   "--out", str(tmp_path / "x.bdsl"), "--config", str(cfg)])
    assert rc == 2


# ------------------------------------------------------------------ eval

def _trained(tmp_path, model="image-only"):
    data = _synth(tmp_path)
    rc, ckpt = _train(tmp_path, data, model=model)
    assert rc == 0
    return data, ckpt


def test_eval_prints_accuracy_and_writes_reports(tmp_path, capsys):
    data, ckpt = _trained(tmp_path)
    report = tmp_path / "report"
    rc = cli.main(["eval", "--data", str(data / "test"), "--ckpt", str(ckpt),
                   "--report", str(report)])
    assert rc == 0
    out = capsys.readouterr().out
    acc_lines = [l for l in out.splitlines() if l.startswith("accuracy=")]
    assert len(acc_lines) == 1
    float(acc_lines[0].split("=")[1])  # parseable, 6-decimal float
    assert len(acc_lines[0].split("=")[1].split(".")[1]) == 6
    assert (report / "report.json").exists()
    assert (report / "confusion.csv").exists()


def test_eval_confusion_row_sums_match_counts(tmp_path):
    data, ckpt = _trained(tmp_path)
    report = tmp_path / "report"
    assert cli.main(["eval", "--data", str(data / "test"), "--ckpt", str(ckpt),
                     "--report", str(report)]) == 0
    import csv

    with open(report / "confusion.csv") as f:
        rows = list(csv.reader(f))
    counts = {r[0]: sum(int(x) for x in r[1:]) for r in rows[1:]}
    assert counts == {"c00": 2, "c01": 2, "c02": 2, "c03": 2}


def test_eval_topology_mismatch_exits_2(tmp_path, capsys):
    data, ckpt = _trained(tmp_path, model="concat")
    for sc in (data / "test").rglob("*.kp.json"):
        sc.unlink()
    rc = cli.main(["eval", "--data", str(data / "test"), "--ckpt", str(ckpt),
                   "--report", str(tmp_path / "r")])
    assert rc == 2


def test_eval_garbage_checkpoint_exits_2(tmp_path):
    data = _synth(tmp_path)
    bad = tmp_path / "bad.bdsl"
    bad.write_bytes(b"not a checkpoint")
    rc = cli.main(["eval", "--data", str(data / "test"), "--ckpt", str(bad),
                   "--report", str(tmp_path / "r")])
    assert rc == 2


# ------------------------------------------------------------------ predict

def test_predict_top5_descending(tmp_path, capsys):
    data, ckpt = _trained(tmp_path)
    img = next((data / "test" / "c00").glob("*.png"))
    capsys.readouterr()  # drop synth/train output
    rc = cli.main(["predict", "--ckpt", str(ckpt), "--image", str(img)])
    assert rc == 0
    lines = [l for l in capsys.readouterr().out.splitlines()
             if not l.startswith("resolved-config")]
    assert len(lines) == 4  # only 4 classes in this toy model
    probs = [float(l.split()[-1]) for l in lines]
    assert probs == sorted(probs, reverse=True)
    assert all(0 < p < 1 for p in probs)


def test_predict_full_probs_sum_to_one(tmp_path, capsys):
    data, ckpt = _trained(tmp_path)
    img = next((data / "test" / "c01").glob("*.png"))
    capsys.readouterr()  # drop synth/train output
    rc = cli.main(["predict", "--ckpt", str(ckpt), "--image", str(img), "--full"])
    assert rc == 0
    lines = [l for l in capsys.readouterr().out.splitlines()
             if not l.startswith("resolved-config")]
    assert len(lines) == 4
    assert sum(float(l.split()[-1]) for l in lines) == pytest.approx(1.0, abs=1e-4)


def test_predict_concat_without_keypoints_exits_1(tmp_path, capsys):
    data, ckpt = _trained(tmp_path, model="concat")
    img = next((data / "test" / "c00").glob("*.png"))
    with pytest.raises(SystemExit) as e:
        cli.main(["predict", "--ckpt", str(ckpt), "--image", str(img)])
    assert e.value.code == 1
    assert "keypoints" in capsys.readouterr().err


def test_predict_concat_with_keypoints(tmp_path, capsys):
    data, ckpt = _trained(tmp_path, model="concat")
    img = next((data / "test" / "c00").glob("*.png"))
    kp = img.with_name(img.stem + ".kp.json")
    rc = cli.main(["predict", "--ckpt", str(ckpt), "--image", str(img),
                   "--keypoints", str(kp)])
    assert rc == 0


# ------------------------------------------------------------------ gradcheck

def test_gradcheck_healthy_exits_0_and_lists_layer_kinds(capsys):
    rc = cli.main(["gradcheck", "--seed", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    for kind in ["conv2d", "batchnorm", "maxpool", "dense", "relu", "elu", "softmax_xent"]:
        assert kind in out
    assert "gradient check passed" in out


def test_gradcheck_broken_backward_exits_3(monkeypatch, capsys):
    real = layers.activation

    def broken(x, kind, tape=None):
        out = real(x, kind, None)
        if tape is not None:
            mask = x.data > 0
            tape.record(out, (x,), lambda g: (0.5 * g * mask,))  # wrong scale
        return out

    monkeypatch.setattr(layers, "activation", broken)
    monkeypatch.setattr(gradcheck, "KINDS", ("relu", "elu"))
    rc = cli.main(["gradcheck", "--seed", "0"])
    assert rc == 3
    assert "FAIL" in capsys.readouterr().out
