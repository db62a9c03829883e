"""Synthetic ambiguous-pairs dataset generator.

Each class owns a template of 21 keypoints in [0.1,0.9]^2; samples jitter the
template with Gaussian noise and render the hand skeleton (fixed bone list)
as anti-aliased segments into a 64x64 grayscale image. For each ambiguous
pair, both classes render their images from the first class's template while
the keypoint sidecars keep each class's own template, so class identity
inside a pair is recoverable only from the keypoints. With K classes and P
pairs, a perfect image-only classifier is capped at (K-2P)/K + (2P/K)/2.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import ConfigError, NUM_KEYPOINTS

# 21-point hand scheme: wrist, then four joints per finger
# (thumb, index, middle, ring, pinky)
HAND_BONES = (
    (0, 1), (1, 2), (2, 3), (3, 4),
    (0, 5), (5, 6), (6, 7), (7, 8),
    (0, 9), (9, 10), (10, 11), (11, 12),
    (0, 13), (13, 14), (14, 15), (15, 16),
    (0, 17), (17, 18), (18, 19), (19, 20),
)

MANIFEST_NAME = "synth_manifest.json"


@dataclass
class SynthConfig:
    classes: int = 8
    ambiguous_pairs: int = 4
    train_n: int = 1600
    test_n: int = 400
    noise: float = 0.015
    seed: int = 42

    def validate(self):
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.ambiguous_pairs < 0 or 2 * self.ambiguous_pairs > self.classes:
            raise ConfigError(
                f"2*pairs must be <= classes, got pairs={self.ambiguous_pairs} classes={self.classes}")
        if self.train_n < self.classes or self.test_n < self.classes:
            raise ConfigError("train_n and test_n must each be >= classes")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")


def render_skeleton(points: np.ndarray, size: int = 64, radius: float = 1.0) -> np.ndarray:
    """Rasterize the hand skeleton into [size,size] float32 values in [0,1].

    ``points`` are [21,2] normalized (x, y); intensity falls off linearly
    over one pixel past ``radius`` from each bone segment.
    """
    if points.shape != (NUM_KEYPOINTS, 2):
        raise ConfigError(f"expected [{NUM_KEYPOINTS},2] points, got {points.shape}")
    px = points[:, 0] * (size - 1)
    py = points[:, 1] * (size - 1)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size), dtype=np.float64)
    for a, b in HAND_BONES:
        dx, dy = px[b] - px[a], py[b] - py[a]
        seg_sq = dx * dx + dy * dy
        if seg_sq < 1e-12:
            t = np.zeros_like(xx)
        else:
            t = np.clip(((xx - px[a]) * dx + (yy - py[a]) * dy) / seg_sq, 0.0, 1.0)
        cx = px[a] + t * dx
        cy = py[a] + t * dy
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        np.maximum(img, np.clip(radius + 0.5 - dist, 0.0, 1.0), out=img)
    return img.astype(np.float32)


def _per_class_counts(total: int, k: int) -> list[int]:
    base, extra = divmod(total, k)
    return [base + (1 if c < extra else 0) for c in range(k)]


def generate_synthetic(config: SynthConfig, out_root) -> dict:
    """Write train/ and test/ folder-per-class trees plus sidecars and a
    generation manifest. Byte-identical output for identical config."""
    config.validate()
    out_root = Path(out_root)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed])))

    k = config.classes
    labels = [f"c{c:02d}" for c in range(k)]
    templates = rng.uniform(0.1, 0.9, size=(k, NUM_KEYPOINTS, 2))
    # pair (2p, 2p+1): the second class renders images from the first's template
    image_template = list(range(k))
    pairs = []
    for p in range(config.ambiguous_pairs):
        image_template[2 * p + 1] = 2 * p
        pairs.append([labels[2 * p], labels[2 * p + 1]])

    for split, total in (("train", config.train_n), ("test", config.test_n)):
        counts = _per_class_counts(total, k)
        for cid, label in enumerate(labels):
            class_dir = out_root / split / label
            class_dir.mkdir(parents=True, exist_ok=True)
            for s in range(counts[cid]):
                kp = templates[cid] + config.noise * rng.standard_normal((NUM_KEYPOINTS, 2))
                kp = np.clip(kp, 0.0, 1.0)
                if image_template[cid] != cid:
                    img_pts = templates[image_template[cid]] \
                        + config.noise * rng.standard_normal((NUM_KEYPOINTS, 2))
                    img_pts = np.clip(img_pts, 0.0, 1.0)
                else:
                    img_pts = kp
                img = render_skeleton(img_pts)
                pixels = np.round(img * 255.0).astype(np.uint8)
                stem = f"s{s:05d}"
                Image.fromarray(pixels, mode="L").save(class_dir / f"{stem}.png")
                sidecar = {
                    "version": 1,
                    "detected": True,
                    "points": [[float(x), float(y)] for x, y in kp],
                }
                with open(class_dir / f"{stem}.kp.json", "w", encoding="utf-8") as f:
                    json.dump(sidecar, f)

    manifest = {
        "config": asdict(config),
        "labels": labels,
        "ambiguous_pairs": pairs,
        "bones": [list(b) for b in HAND_BONES],
        "templates": templates.tolist(),
    }
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest
