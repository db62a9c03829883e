"""Training stack: Adam with bias correction, reduce-LR-on-plateau, early
stopping, the epoch loop, and evaluation reports.

The loop is deterministic given (seed, data, config): batch order is a pure
function of (seed, epoch), every update is plain numpy, and the checkpoint
returned is the best-validation-loss snapshot, not the last epoch.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from .data import DatasetManifest, epoch_permutation, load_dataset_arrays
from .layers import softmax_xent
from .tensor import F32, GradTape, Tensor


class OptimizerError(Exception):
    """Gradient/parameter mismatch inside the optimizer."""


class DivergenceError(Exception):
    """Loss became non-finite during training."""

    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    lr0: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 30
    plateau_patience: int = 4
    plateau_factor: float = 0.1
    min_lr: float = 1e-6
    early_stop_patience: int = 8
    improvement_tol: float = 1e-7
    seed: int = 0

    def validate(self):
        if self.lr0 <= 0:
            raise OptimizerError(f"lr0 must be > 0, got {self.lr0}")
        if not 0 < self.plateau_factor < 1:
            raise OptimizerError(f"plateau factor must be in (0,1), got {self.plateau_factor}")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise OptimizerError("patience values must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise OptimizerError("batch_size and max_epochs must be >= 1")


@dataclass
class HistoryRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainState:
    lr: float
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    best_val_loss: float = math.inf
    plateau_counter: int = 0
    epochs_since_best: int = 0
    history: list = field(default_factory=list)


def adam_step(params, grads, state: TrainState, config: TrainConfig):
    """One Adam update, in place: m <- b1*m + (1-b1)*g, v <- b2*v + (1-b2)*g^2,
    theta <- theta - lr * mhat / (sqrt(vhat) + eps)."""
    state.t += 1
    b1, b2, eps = config.beta1, config.beta2, config.eps
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params:
        g = grads[p].data
        if g.shape != p.shape:
            raise OptimizerError(f"gradient shape {g.shape} != parameter shape {p.shape} ({name})")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


def plateau_update(state: TrainState, val_loss: float, config: TrainConfig) -> bool:
    """End-of-epoch schedule bookkeeping; returns True if val loss improved."""
    if val_loss < state.best_val_loss - config.improvement_tol:
        state.best_val_loss = val_loss
        state.plateau_counter = 0
        state.epochs_since_best = 0
        return True
    state.plateau_counter += 1
    state.epochs_since_best += 1
    if state.plateau_counter >= config.plateau_patience:
        state.lr = max(state.lr * config.plateau_factor, config.min_lr)
        state.plateau_counter = 0
    return False


def early_stop_check(state: TrainState, config: TrainConfig) -> bool:
    """True when validation has not improved for early_stop_patience epochs."""
    return state.epochs_since_best >= config.early_stop_patience


def _batched_eval(net, images, keypoints, labels, batch_size=128):
    """Infer-mode loss/accuracy/predictions over a full array set."""
    n = images.shape[0]
    total_loss = 0.0
    preds = np.zeros(n, dtype=np.int64)
    use_kp = net.topology == M.TOPOLOGY_CONCAT
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        imgs = Tensor(images[lo:hi])
        kps = Tensor(keypoints[lo:hi]) if use_kp else None
        logits = net.forward_logits(imgs, kps, mode="infer")
        probs, loss = softmax_xent(logits, labels[lo:hi])
        total_loss += loss.item() * (hi - lo)
        preds[lo:hi] = probs.data.argmax(axis=1)
    acc = float((preds == labels).mean())
    return total_loss / n, acc, preds


def fit(net, train_manifest: DatasetManifest, val_manifest: DatasetManifest,
        config: TrainConfig):
    """Train ``net``; returns (net restored to the best-val-loss snapshot,
    history rows)."""
    config.validate()
    if not train_manifest.items or not val_manifest.items:
        raise OptimizerError("train and val manifests must be non-empty")
    overlap = {it.image_path for it in train_manifest.items} & \
              {it.image_path for it in val_manifest.items}
    if overlap:
        raise OptimizerError(f"train/val manifests overlap on {len(overlap)} items")

    hw = net.config.input_hw
    tr_images, tr_kps, tr_labels, _ = load_dataset_arrays(train_manifest, hw)
    va_images, va_kps, va_labels, _ = load_dataset_arrays(val_manifest, hw)

    params = net.parameters()
    tensors = [t for _, t in params]
    state = TrainState(lr=config.lr0)
    use_kp = net.topology == M.TOPOLOGY_CONCAT
    n = tr_images.shape[0]
    best_snapshot = {name: t.data.copy() for name, t in net.named_tensors()}

    for epoch in range(1, config.max_epochs + 1):
        lr_in_effect = state.lr
        perm = epoch_permutation(n, config.seed, epoch)
        epoch_loss = 0.0
        epoch_correct = 0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            imgs = Tensor(tr_images[idx])
            kps = Tensor(tr_kps[idx]) if use_kp else None
            labels = tr_labels[idx]

            tape = GradTape()
            logits = net.forward_logits(imgs, kps, mode="train", tape=tape)
            probs, loss = softmax_xent(logits, labels, tape)
            batch_loss = loss.item()
            if not math.isfinite(batch_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch)
            grads = tape.backward(loss, tensors)
            adam_step(params, grads, state, config)

            epoch_loss += batch_loss * len(idx)
            epoch_correct += int((probs.data.argmax(axis=1) == labels).sum())

        val_loss, val_acc, _ = _batched_eval(net, va_images, va_kps, va_labels)
        improved = plateau_update(state, val_loss, config)
        if improved:
            best_snapshot = {name: t.data.copy() for name, t in net.named_tensors()}
        state.history.append(HistoryRow(
            epoch=epoch,
            train_loss=epoch_loss / n,
            train_acc=epoch_correct / n,
            val_loss=val_loss,
            val_acc=val_acc,
            lr=lr_in_effect,
        ))
        if early_stop_check(state, config):
            break

    for name, t in net.named_tensors():
        t.data[...] = best_snapshot[name]
    return net, state.history


# ------------------------------------------------------------------ reports

@dataclass
class EvalReport:
    accuracy: float
    classes: list
    confusion: np.ndarray      # [K,K] counts, rows = true, cols = predicted
    precision: list
    recall: list
    confused_pairs: list       # [(true_label, predicted_label, count)] desc

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "per_class": [
                {"label": c, "precision": self.precision[i], "recall": self.recall[i],
                 "support": int(self.confusion[i].sum())}
                for i, c in enumerate(self.classes)
            ],
            "confused_pairs": [
                {"true": a, "predicted": b, "count": int(n)}
                for a, b, n in self.confused_pairs
            ],
        }


def evaluate(net, manifest: DatasetManifest, top_pairs: int = 10) -> EvalReport:
    """Infer-mode pass over a manifest: accuracy, confusion matrix, per-class
    precision/recall, and the most-confused class pairs."""
    images, kps, labels, _ = load_dataset_arrays(manifest, net.config.input_hw)
    _, acc, preds = _batched_eval(net, images, kps, labels)
    k = len(manifest.classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)

    precision = []
    recall = []
    for c in range(k):
        col = confusion[:, c].sum()
        row = confusion[c, :].sum()
        precision.append(float(confusion[c, c] / col) if col else 0.0)
        recall.append(float(confusion[c, c] / row) if row else 0.0)

    off = [(manifest.classes[i], manifest.classes[j], int(confusion[i, j]))
           for i in range(k) for j in range(k) if i != j and confusion[i, j] > 0]
    off.sort(key=lambda t: (-t[2], t[0], t[1]))
    return EvalReport(accuracy=acc, classes=list(manifest.classes), confusion=confusion,
                      precision=precision, recall=recall,
                      confused_pairs=off[:top_pairs])


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"])
        for row in history:
            w.writerow([row.epoch, f"{row.train_loss:.6f}", f"{row.train_acc:.6f}",
                        f"{row.val_loss:.6f}", f"{row.val_acc:.6f}", f"{row.lr:.6f}"])


def write_report(report: EvalReport, out_dir) -> None:
    """Emit report.json plus confusion.csv (labelled K x K integer grid)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2)
    with open(out_dir / "confusion.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow([""] + list(report.classes))
        for i, label in enumerate(report.classes):
            w.writerow([label] + [int(x) for x in report.confusion[i]])


def comparison_table(columns: dict) -> str:
    """Side-by-side accuracy table, one column per trained model.

    ``columns`` maps a model name to {"train_acc", "val_acc", "test_acc",
    "epochs"} values.
    """
    names = list(columns.keys())
    rows = [
        ("Training accuracy", "train_acc", "{:.4f}"),
        ("Validation accuracy", "val_acc", "{:.4f}"),
        ("Testing accuracy", "test_acc", "{:.4f}"),
        ("Epochs", "epochs", "{}"),
    ]
    width = max(22, *(len(n) + 2 for n in names))
    lines = [" " * 22 + "".join(n.rjust(width) for n in names)]
    for title, key, fmt in rows:
        cells = []
        for n in names:
            value = columns[n].get(key)
            cells.append(("-" if value is None else fmt.format(value)).rjust(width))
        lines.append(title.ljust(22) + "".join(cells))
    return "\n".join(lines)
