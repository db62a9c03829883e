"""Dataset plumbing: folder scanning, image preprocessing, keypoint sidecars,
train/val splits, and the binary tensor-archive container.

Layout on disk: root/<label>/<name>.png|jpg, with an optional keypoint sidecar
root/<label>/<name>.kp.json matched by filename stem. Class ids are assigned
by lexicographic label order; item order is lexicographic by path, so scans
are reproducible regardless of filesystem enumeration order.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import F32, F64, Tensor

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
SIDECAR_VERSION = 1
NUM_KEYPOINTS = 21

ARCHIVE_MAGIC = b"CTNS"
ARCHIVE_VERSION = 1
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class DatasetError(Exception):
    """Unusable dataset tree (no classes, empty class, bad split sizes)."""


class DecodeError(Exception):
    """Image file could not be decoded."""


class SchemaError(Exception):
    """Keypoint sidecar violates the sidecar JSON schema."""


class FormatError(Exception):
    """Malformed or corrupted binary tensor archive."""


class ConfigError(Exception):
    """Invalid generation/model configuration."""


# ------------------------------------------------------------------ images

def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers and clamped borders."""
    h, w = img.shape
    ys = (np.arange(out_h, dtype=F64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=F64) + 0.5) * (w / out_w) - 0.5
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    wy = ys - y0
    wx = xs - x0
    y0c = np.clip(y0.astype(np.int64), 0, h - 1)
    y1c = np.clip(y0.astype(np.int64) + 1, 0, h - 1)
    x0c = np.clip(x0.astype(np.int64), 0, w - 1)
    x1c = np.clip(x0.astype(np.int64) + 1, 0, w - 1)
    v00 = img[np.ix_(y0c, x0c)]
    v01 = img[np.ix_(y0c, x1c)]
    v10 = img[np.ix_(y1c, x0c)]
    v11 = img[np.ix_(y1c, x1c)]
    wy = wy[:, None]
    wx = wx[None, :]
    return (v00 * (1 - wy) * (1 - wx) + v01 * (1 - wy) * wx
            + v10 * wy * (1 - wx) + v11 * wy * wx)


def load_image(path, target=(64, 64)) -> Tensor:
    """Decode PNG/JPEG, convert to luminance grayscale, bilinear-resize to
    ``target``, scale into [0,1]. Returns a [1,H,W] tensor."""
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=F64)
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DecodeError(f"cannot decode {path}: {e}") from e
    gray = (LUMA_WEIGHTS[0] * rgb[:, :, 0]
            + LUMA_WEIGHTS[1] * rgb[:, :, 1]
            + LUMA_WEIGHTS[2] * rgb[:, :, 2])
    resized = bilinear_resize(gray, target[0], target[1]) / 255.0
    return Tensor(resized[None, :, :].astype(F32))


# ------------------------------------------------------------------ sidecars

def load_keypoints(path):
    """Parse a keypoint sidecar into (flat [42] tensor, detected flag).

    Points are (x, y) pairs in [0,1], flattened x-then-y per point in the
    detector's fixed 21-point order. detected=false carries all zeros.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"unreadable sidecar {path}: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: sidecar must be a JSON object")
    if doc.get("version") != SIDECAR_VERSION:
        raise SchemaError(f"{path}: unsupported sidecar version {doc.get('version')!r}")
    if "detected" not in doc or not isinstance(doc["detected"], bool):
        raise SchemaError(f"{path}: missing boolean 'detected'")
    if not doc["detected"]:
        return Tensor(np.zeros(2 * NUM_KEYPOINTS, dtype=F32)), False
    points = doc.get("points")
    if not isinstance(points, list) or len(points) != NUM_KEYPOINTS:
        n = len(points) if isinstance(points, list) else "missing"
        raise SchemaError(f"{path}: expected exactly {NUM_KEYPOINTS} points, got {n}")
    flat = np.zeros(2 * NUM_KEYPOINTS, dtype=F32)
    for i, pt in enumerate(points):
        if not isinstance(pt, (list, tuple)) or len(pt) != 2:
            raise SchemaError(f"{path}: point {i} is not an [x, y] pair")
        try:
            x, y = float(pt[0]), float(pt[1])
        except (TypeError, ValueError) as e:
            raise SchemaError(f"{path}: point {i} is not numeric") from e
        flat[2 * i] = min(max(x, 0.0), 1.0)
        flat[2 * i + 1] = min(max(y, 0.0), 1.0)
    return Tensor(flat), True


# ------------------------------------------------------------------ manifests

@dataclass(frozen=True)
class Item:
    image_path: Path
    keypoint_path: Path | None
    class_id: int


@dataclass
class DatasetManifest:
    root: Path
    classes: list[str]
    items: list[Item]
    split: str = "train"

    def __len__(self):
        return len(self.items)


def sidecar_path_for(image_path: Path) -> Path:
    return image_path.with_name(image_path.stem + ".kp.json")


def scan_dataset(root, split: str = "train") -> DatasetManifest:
    """Walk root/<label>/<image> into a manifest with dense class ids."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_dirs = sorted((d for d in root.iterdir() if d.is_dir()), key=lambda d: d.name)
    if not class_dirs:
        raise DatasetError(f"{root}: no class folders")
    classes = [d.name for d in class_dirs]
    items = []
    for cid, d in enumerate(class_dirs):
        images = sorted(p for p in d.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)
        if not images:
            raise DatasetError(f"class folder {d} contains no images")
        for p in images:
            kp = sidecar_path_for(p)
            items.append(Item(p, kp if kp.exists() else None, cid))
    return DatasetManifest(root=root, classes=classes, items=items, split=split)


def split_train_val(manifest: DatasetManifest, val_count: int, seed: int,
                    stratified: bool = False):
    """Seeded shuffle-and-cut into disjoint train/val manifests."""
    n = len(manifest.items)
    if not 0 < val_count < n:
        raise DatasetError(f"val_count must be in (0, {n}), got {val_count}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    if stratified:
        labels = np.array([it.class_id for it in manifest.items])
        counts = np.bincount(labels, minlength=len(manifest.classes))
        quota = counts * val_count / n
        per_class = np.floor(quota).astype(np.int64)
        remainder = val_count - int(per_class.sum())
        order = np.argsort(-(quota - per_class), kind="stable")
        for c in order[:remainder]:
            per_class[c] += 1
        val_idx = []
        for c in range(len(manifest.classes)):
            members = np.flatnonzero(labels == c)
            take = min(per_class[c], len(members))
            val_idx.extend(rng.permutation(members)[:take])
        val_set = set(int(i) for i in val_idx)
    else:
        perm = rng.permutation(n)
        val_set = set(int(i) for i in perm[:val_count])

    train_items = [it for i, it in enumerate(manifest.items) if i not in val_set]
    val_items = [it for i, it in enumerate(manifest.items) if i in val_set]
    train = DatasetManifest(manifest.root, list(manifest.classes), train_items, "train")
    val = DatasetManifest(manifest.root, list(manifest.classes), val_items, "val")
    return train, val


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """Batch order for one epoch; a pure function of (seed, epoch)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, epoch])))
    return rng.permutation(n)


# ------------------------------------------------------------------ samples

@dataclass
class Sample:
    image: Tensor          # [1,H,W] in [0,1]
    keypoints: Tensor      # [42] in [0,1]; zeros when not detected
    detected: bool
    label: int


def load_sample(item: Item, target=(64, 64)) -> Sample:
    image = load_image(item.image_path, target)
    if item.keypoint_path is None:
        kp, detected = Tensor(np.zeros(2 * NUM_KEYPOINTS, dtype=F32)), False
    else:
        kp, detected = load_keypoints(item.keypoint_path)
    return Sample(image=image, keypoints=kp, detected=detected, label=item.class_id)


def load_dataset_arrays(manifest: DatasetManifest, target=(64, 64)):
    """Materialize a manifest into stacked arrays for batched training:
    images [N,1,H,W], keypoints [N,42], labels [N], detected [N]."""
    n = len(manifest.items)
    images = np.zeros((n, 1, target[0], target[1]), dtype=F32)
    keypoints = np.zeros((n, 2 * NUM_KEYPOINTS), dtype=F32)
    labels = np.zeros(n, dtype=np.int64)
    detected = np.zeros(n, dtype=bool)
    for i, item in enumerate(manifest.items):
        s = load_sample(item, target)
        images[i] = s.image.data
        keypoints[i] = s.keypoints.data
        labels[i] = s.label
        detected[i] = s.detected
    return images, keypoints, labels, detected


# ------------------------------------------------------------------ archives

_DTYPE_CODES = {np.dtype(F32): 0, np.dtype(F64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def archive_to_bytes(tensors) -> bytes:
    """Serialize a named tensor map (insertion order preserved).

    Wire format: "CTNS" | version u16 LE | count u32 LE | per tensor:
    name-len u16, name UTF-8, dtype u8 (0=f32, 1=f64), ndim u8, dims u32 LE,
    raw little-endian data; terminated by a CRC-32 (u32 LE) of all preceding
    bytes so corruption is always detectable.
    """
    payload = bytearray()
    payload += ARCHIVE_MAGIC
    payload += struct.pack("<H", ARCHIVE_VERSION)
    payload += struct.pack("<I", len(tensors))
    for name, t in tensors.items():
        arr = t.data if isinstance(t, Tensor) else np.ascontiguousarray(t)
        if arr.dtype not in _DTYPE_CODES:
            raise FormatError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        nb = name.encode("utf-8")
        if not 0 < len(nb) <= 0xFFFF:
            raise FormatError(f"bad tensor name {name!r}")
        payload += struct.pack("<H", len(nb))
        payload += nb
        payload += struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim)
        for d in arr.shape:
            payload += struct.pack("<I", d)
        payload += arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    payload += struct.pack("<I", zlib.crc32(bytes(payload)))
    return bytes(payload)


def write_archive(tensors, path) -> None:
    Path(path).write_bytes(archive_to_bytes(tensors))


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated archive")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self):
        return self.take(1)[0]

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def archive_from_bytes(raw: bytes) -> dict:
    """Parse archive bytes back into {name: Tensor}; any structural violation
    or checksum mismatch raises FormatError."""
    if len(raw) < len(ARCHIVE_MAGIC) + 2 + 4 + 4:
        raise FormatError("file too short to be a tensor archive")
    body, crc_bytes = raw[:-4], raw[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(body):
        raise FormatError("checksum mismatch (corrupted archive)")
    cur = _Cursor(body)
    if cur.take(4) != ARCHIVE_MAGIC:
        raise FormatError("bad magic bytes")
    version = cur.u16()
    if version != ARCHIVE_VERSION:
        raise FormatError(f"unsupported archive version {version}")
    count = cur.u32()
    out = {}
    for _ in range(count):
        name_len = cur.u16()
        if name_len == 0:
            raise FormatError("empty tensor name")
        try:
            name = cur.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"tensor name is not UTF-8: {e}") from e
        if name in out:
            raise FormatError(f"duplicate tensor name {name!r}")
        code = cur.u8()
        if code not in _CODE_DTYPES:
            raise FormatError(f"unknown dtype code {code}")
        ndim = cur.u8()
        if ndim > 16:
            raise FormatError(f"implausible rank {ndim}")
        dims = tuple(cur.u32() for _ in range(ndim))
        if any(d < 1 for d in dims):
            raise FormatError(f"tensor {name!r} has zero-size dimension")
        n_elems = int(np.prod(dims, dtype=np.int64)) if dims else 1
        if n_elems > (1 << 32):
            raise FormatError(f"tensor {name!r} implausibly large")
        dtype = _CODE_DTYPES[code]
        data = cur.take(n_elems * dtype.itemsize)
        arr = np.frombuffer(data, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))
        out[name] = Tensor(arr)
    if cur.pos != len(body):
        raise FormatError("trailing bytes after last tensor")
    return out


def read_archive(path) -> dict:
    return archive_from_bytes(Path(path).read_bytes())
