"""Command-line entry point.

Subcommands: synth (generate the synthetic ambiguous-pairs dataset), train,
eval, predict, and gradcheck. Exit codes: 0 success, 1 usage error, 2 data
error, 3 runtime/divergence error. Every run prints its resolved
configuration before doing any work, so results are reproducible from the
log line plus the seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import gradcheck as G
from . import model as M
from . import synth as S
from . import train as T
from .data import (
    ConfigError,
    DatasetError,
    DecodeError,
    FormatError,
    SchemaError,
    load_image,
    load_keypoints,
    scan_dataset,
    split_train_val,
)
from .model import InputError
from .tensor import Tensor, TensorError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_DATA_ERRORS = (DatasetError, DecodeError, SchemaError, FormatError, ConfigError, InputError)


class _Parser(argparse.ArgumentParser):
    """argparse, but usage failures exit 1 per the exit-code table."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_resolved(subcommand, settings: dict):
    print(f"resolved-config [{subcommand}]: {json.dumps(settings, sort_keys=True)}")


# ------------------------------------------------------------------ synth

def _cmd_synth(args, parser):
    cfg = S.SynthConfig(classes=args.classes, ambiguous_pairs=args.pairs,
                        train_n=args.train, test_n=args.test,
                        noise=args.noise, seed=args.seed)
    try:
        cfg.validate()
    except ConfigError as e:
        parser.error(str(e))
    _print_resolved("synth", {**dataclasses.asdict(cfg), "out": str(args.out)})
    S.generate_synthetic(cfg, args.out)
    n_files = sum(1 for _ in Path(args.out).rglob("*.png"))
    print(f"wrote {cfg.classes} classes ({cfg.ambiguous_pairs} ambiguous pairs), "
          f"{n_files} images under {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------ train

def _load_config_file(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if not isinstance(doc, dict) or not set(doc) <= {"model", "train"}:
        raise ConfigError(f"config file {path} must hold only 'model' and/or 'train' objects")
    return doc.get("model", {}), doc.get("train", {})


def _apply_overrides(instance, overrides: dict, source: str):
    valid = {f.name for f in dataclasses.fields(instance)}
    unknown = set(overrides) - valid
    if unknown:
        raise ConfigError(f"unknown {source} config keys: {sorted(unknown)}")
    for key, value in overrides.items():
        current = getattr(instance, key)
        if isinstance(current, tuple):
            value = tuple(value)
        setattr(instance, key, value)
    return instance


def _missing_sidecars(manifest, limit=10):
    return [str(it.image_path) for it in manifest.items if it.keypoint_path is None][:limit]


def _cmd_train(args, parser):
    if args.val_count is not None and args.val_frac is not None:
        parser.error("--val-count and --val-frac are mutually exclusive")

    model_over, train_over = ({}, {})
    if args.config:
        model_over, train_over = _load_config_file(args.config)

    manifest = scan_dataset(args.data)
    model_cfg = _apply_overrides(M.ModelConfig(), model_over, "model")
    if "num_classes" in model_over and model_over["num_classes"] != len(manifest.classes):
        raise ConfigError(
            f"config file num_classes={model_over['num_classes']} but dataset "
            f"has {len(manifest.classes)} classes")
    model_cfg.num_classes = len(manifest.classes)
    train_cfg = _apply_overrides(T.TrainConfig(), train_over, "train")
    if args.epochs is not None:
        train_cfg.max_epochs = args.epochs
    if args.seed is not None:
        train_cfg.seed = args.seed
        model_cfg.seed = args.seed
    model_cfg.validate()
    train_cfg.validate()

    concat = args.model == "concat"
    if concat:
        offenders = _missing_sidecars(manifest)
        if offenders:
            print("error: --model concat requires a keypoint sidecar for every image; "
                  "first missing:", file=sys.stderr)
            for p in offenders:
                print(f"  {p}", file=sys.stderr)
            return EXIT_DATA

    n = len(manifest.items)
    if args.val_count is not None:
        val_count = args.val_count
    else:
        frac = args.val_frac if args.val_frac is not None else 0.1
        val_count = max(1, round(n * frac))

    _print_resolved("train", {
        "data": str(args.data), "model": args.model, "out": str(args.out),
        "val_count": val_count, "model_config": model_cfg.to_dict(),
        "train_config": dataclasses.asdict(train_cfg),
    })

    train_m, val_m = split_train_val(manifest, val_count, seed=train_cfg.seed)
    net = M.build_concatenated(model_cfg) if concat else M.build_image_only(model_cfg)
    net.class_labels = list(manifest.classes)
    net, history = T.fit(net, train_m, val_m, train_cfg)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    M.save_checkpoint(net, model_cfg, out)
    T.write_history_csv(history, out.parent / "history.csv")
    best = min(r.val_loss for r in history)
    print(f"trained {len(history)} epochs; best val_loss={best:.6f}; "
          f"checkpoint={out}; history={out.parent / 'history.csv'}")
    return EXIT_OK


# ------------------------------------------------------------------ eval

def _cmd_eval(args, parser):
    net, model_cfg = M.load_checkpoint(args.ckpt)
    manifest = scan_dataset(args.data, split="test")
    _print_resolved("eval", {"data": str(args.data), "ckpt": str(args.ckpt),
                             "report": str(args.report), "topology": net.topology})
    if len(manifest.classes) != model_cfg.num_classes:
        print(f"error: checkpoint expects {model_cfg.num_classes} classes but dataset "
              f"has {len(manifest.classes)}", file=sys.stderr)
        return EXIT_DATA
    if net.topology == M.TOPOLOGY_CONCAT:
        offenders = _missing_sidecars(manifest)
        if offenders:
            print("error: concatenated checkpoint needs keypoint sidecars; first missing:",
                  file=sys.stderr)
            for p in offenders:
                print(f"  {p}", file=sys.stderr)
            return EXIT_DATA
    report = T.evaluate(net, manifest)
    T.write_report(report, args.report)
    print(f"accuracy={report.accuracy:.6f}")
    return EXIT_OK


# ------------------------------------------------------------------ predict

def _cmd_predict(args, parser):
    net, model_cfg = M.load_checkpoint(args.ckpt)
    concat = net.topology == M.TOPOLOGY_CONCAT
    if concat and args.keypoints is None:
        parser.error("this checkpoint is a concatenated model: --keypoints is required")
    if not concat and args.keypoints is not None:
        parser.error("this checkpoint is an image-only model: drop --keypoints")
    _print_resolved("predict", {"ckpt": str(args.ckpt), "image": str(args.image),
                                "keypoints": str(args.keypoints) if args.keypoints else None,
                                "full": bool(args.full)})

    image = load_image(args.image, model_cfg.input_hw)
    imgs = Tensor(image.data[None, ...])
    kps = None
    if concat:
        kp, _ = load_keypoints(args.keypoints)
        kps = Tensor(kp.data[None, :])
    probs = net.forward(imgs, kps, mode="infer").data[0]
    labels = net.class_labels or [f"class{i}" for i in range(model_cfg.num_classes)]
    order = np.argsort(-probs, kind="stable")
    shown = order if args.full else order[:5]
    for i in shown:
        print(f"{labels[i]} {probs[i]:.6f}")
    return EXIT_OK


# ------------------------------------------------------------------ gradcheck

def _cmd_gradcheck(args, parser):
    _print_resolved("gradcheck", {"seed": args.seed, "n_seeds": 5,
                                  "tolerance": G.TOLERANCE})
    results = G.run_suite(seed=args.seed, n_seeds=5)
    ok = True
    for kind, err in results.items():
        status = "ok" if err < G.TOLERANCE else "FAIL"
        print(f"{kind:14s} max_rel_err={err:.3e}  {status}")
        ok = ok and err < G.TOLERANCE
    if not ok:
        print("gradient check FAILED", file=sys.stderr)
        return EXIT_RUNTIME
    print("gradient check passed")
    return EXIT_OK


# ------------------------------------------------------------------ wiring

def build_parser() -> _Parser:
    parser = _Parser(prog="bdslnet",
                     description="Two-branch hand-sign classifier toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate the synthetic ambiguous-pairs dataset")
    p.add_argument("--out", required=True, help="output dataset root")
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--pairs", type=int, default=4,
                   help="ambiguous class pairs distinguishable only by keypoints")
    p.add_argument("--train", type=int, default=1600, help="total training images")
    p.add_argument("--test", type=int, default=400, help="total test images")
    p.add_argument("--noise", type=float, default=0.015, help="keypoint jitter sigma")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a model on a folder dataset")
    p.add_argument("--data", required=True, help="dataset root (folder per class)")
    p.add_argument("--model", required=True, choices=["concat", "image-only"])
    p.add_argument("--epochs", type=int, default=None, help="override max epochs")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--val-count", type=int, default=None, help="validation item count")
    p.add_argument("--val-frac", type=float, default=None,
                   help="validation fraction (default 0.1)")
    p.add_argument("--seed", type=int, default=None, help="sets model and train seeds")
    p.add_argument("--config", default=None,
                   help="JSON file with 'model'/'train' setting objects; flags win")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a folder dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--report", required=True, help="directory for report.json + confusion.csv")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="classify a single image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--keypoints", default=None, help="keypoint sidecar (concat models)")
    p.add_argument("--full", action="store_true", help="print every class, not top-5")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer kind")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except _DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (T.DivergenceError, T.OptimizerError, TensorError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
