"""Network assembly: the concatenated two-branch classifier (CNN image branch
plus keypoint branch joined by a dense fusion head) and the image-only
baseline, with seeded initialization and binary checkpoints.

Image branch: 10 conv blocks (conv + ReLU + BN by default, the order is
switchable) with max pools after the configured conv positions, flattened
into two ReLU dense layers. Pose branch: two ReLU dense layers over the
42-element keypoint vector. Fusion head: concat, two ELU dense layers, and
a softmax output over the classes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import data as D
from . import tensor as tc
from .data import ConfigError, FormatError
from .layers import BatchNorm, Conv2d, Dense, activation, maxpool2x2
from .tensor import F32, GradTape, ShapeError, Tensor

CHECKPOINT_MAGIC = b"BDSL"
CHECKPOINT_VERSION = 1

TOPOLOGY_CONCAT = "concatenated"
TOPOLOGY_IMAGE_ONLY = "image_only"


class InputError(Exception):
    """Forward inputs do not match the network topology."""


@dataclass
class ModelConfig:
    input_hw: tuple = (64, 64)
    image_channels: int = 1
    conv_channels: tuple = (32, 32, 64, 64, 128, 128, 256, 256, 512, 512)
    pool_after: tuple = (2, 4, 6, 8)     # 1-based conv positions
    image_fc_widths: tuple = (256, 128)
    pose_input_dim: int = 42
    pose_fc_widths: tuple = (128, 128)
    head_widths: tuple = (128, 64)
    num_classes: int = 38
    bn_order: str = "act_then_bn"        # or "bn_then_act"
    bn_eps: float = 1e-5
    bn_momentum: float = 0.99
    seed: int = 0

    def validate(self):
        if len(self.conv_channels) != 10:
            raise ConfigError(f"exactly 10 conv widths required, got {len(self.conv_channels)}")
        pools = tuple(sorted(set(int(p) for p in self.pool_after)))
        if len(pools) != 4 or pools != tuple(sorted(int(p) for p in self.pool_after)):
            raise ConfigError(f"exactly 4 distinct pool positions required, got {self.pool_after}")
        if any(not 1 <= p <= 10 for p in pools):
            raise ConfigError(f"pool positions must be conv indices 1..10, got {self.pool_after}")
        h, w = self.input_hw
        if h % 16 or w % 16:
            raise ConfigError(f"input dims must be divisible by 2^4, got {self.input_hw}")
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.pose_input_dim != 2 * D.NUM_KEYPOINTS:
            raise ConfigError(f"pose input must be {2 * D.NUM_KEYPOINTS}, got {self.pose_input_dim}")
        if len(self.image_fc_widths) != 2 or len(self.pose_fc_widths) != 2:
            raise ConfigError("both branches take exactly 2 dense widths")
        if len(self.head_widths) != 2:
            raise ConfigError("the head takes exactly 2 hidden widths")
        if self.bn_order not in ("act_then_bn", "bn_then_act"):
            raise ConfigError(f"unknown bn_order {self.bn_order!r}")
        if any(c < 1 for c in self.conv_channels):
            raise ConfigError("conv widths must be positive")

    @property
    def flatten_width(self) -> int:
        h, w = self.input_hw
        return self.conv_channels[-1] * (h // 16) * (w // 16)

    def to_dict(self):
        d = asdict(self)
        d["input_hw"] = list(self.input_hw)
        return d

    @classmethod
    def from_dict(cls, d):
        cfg = cls(
            input_hw=tuple(d["input_hw"]),
            image_channels=int(d["image_channels"]),
            conv_channels=tuple(d["conv_channels"]),
            pool_after=tuple(d["pool_after"]),
            image_fc_widths=tuple(d["image_fc_widths"]),
            pose_input_dim=int(d["pose_input_dim"]),
            pose_fc_widths=tuple(d["pose_fc_widths"]),
            head_widths=tuple(d["head_widths"]),
            num_classes=int(d["num_classes"]),
            bn_order=str(d["bn_order"]),
            bn_eps=float(d["bn_eps"]),
            bn_momentum=float(d["bn_momentum"]),
            seed=int(d["seed"]),
        )
        cfg.validate()
        return cfg


def _param_rng(seed: int, name: str) -> np.random.Generator:
    # per-parameter stream keyed by name: shared layers initialize identically
    # across topologies built from the same seed
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed, zlib.crc32(name.encode())])))


def he_uniform(shape, fan_in, rng, dtype=F32) -> Tensor:
    limit = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype))


def glorot_uniform(shape, fan_in, fan_out, rng, dtype=F32, scale=1.0) -> Tensor:
    limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape).astype(dtype))


# the softmax layer starts near-uniform: small output weights keep the
# first-batch cross-entropy at ~ln(num_classes)
OUTPUT_INIT_SCALE = 0.1


class Network:
    """Instantiated layer stack with uniquely named parameter tensors."""

    def __init__(self, topology: str, config: ModelConfig):
        self.topology = topology
        self.config = config
        self.class_labels = None
        self.image_convs: list[Conv2d] = []
        self.image_bns: list[BatchNorm] = []
        self.image_fcs: list[Dense] = []
        self.pose_fcs: list[Dense] = []
        self.head_fcs: list[Dense] = []

    # ---------------------------------------------------------- parameters

    def parameters(self):
        """Trainable (name, tensor) pairs in a stable order."""
        out = []
        for i, (conv, bn) in enumerate(zip(self.image_convs, self.image_bns)):
            out.append((f"img_conv{i}_w", conv.w))
            out.append((f"img_conv{i}_b", conv.b))
            out.append((f"img_bn{i}_gamma", bn.gamma))
            out.append((f"img_bn{i}_beta", bn.beta))
        for j, fc in enumerate(self.image_fcs):
            out.append((f"img_fc{j}_w", fc.w))
            out.append((f"img_fc{j}_b", fc.b))
        for j, fc in enumerate(self.pose_fcs):
            out.append((f"pose_fc{j}_w", fc.w))
            out.append((f"pose_fc{j}_b", fc.b))
        for k, fc in enumerate(self.head_fcs):
            out.append((f"head_fc{k}_w", fc.w))
            out.append((f"head_fc{k}_b", fc.b))
        return out

    def state_tensors(self):
        """Non-trainable running statistics, checkpointed alongside."""
        out = []
        for i, bn in enumerate(self.image_bns):
            out.append((f"img_bn{i}_mean", bn.running_mean))
            out.append((f"img_bn{i}_var", bn.running_var))
        return out

    def named_tensors(self):
        return self.parameters() + self.state_tensors()

    # ------------------------------------------------------------- forward

    def _image_features(self, images: Tensor, mode: str, tape):
        cfg = self.config
        B = images.shape[0]
        expect = (B, cfg.image_channels, cfg.input_hw[0], cfg.input_hw[1])
        if images.shape != expect:
            raise ShapeError(f"image input must be {expect}, got {images.shape}")
        pools = set(cfg.pool_after)
        x = images
        for i, (conv, bn) in enumerate(zip(self.image_convs, self.image_bns)):
            x = conv.forward(x, tape)
            if cfg.bn_order == "act_then_bn":
                x = activation(x, "relu", tape)
                x = bn.forward(x, tape, mode=mode)
            else:
                x = bn.forward(x, tape, mode=mode)
                x = activation(x, "relu", tape)
            if (i + 1) in pools:
                x = maxpool2x2(x, tape)
        x = tc.reshape(x, (B, cfg.flatten_width), tape)
        for fc in self.image_fcs:
            x = activation(fc.forward(x, tape), "relu", tape)
        return x

    def _pose_features(self, keypoints: Tensor, tape):
        cfg = self.config
        if keypoints.ndim != 2 or keypoints.shape[1] != cfg.pose_input_dim:
            raise ShapeError(
                f"keypoint input must be [B,{cfg.pose_input_dim}], got {keypoints.shape}")
        x = keypoints
        for fc in self.pose_fcs:
            x = activation(fc.forward(x, tape), "relu", tape)
        return x

    def forward_logits(self, images: Tensor, keypoints: Tensor | None = None,
                       mode: str = "infer", tape: GradTape | None = None) -> Tensor:
        if self.topology == TOPOLOGY_CONCAT:
            if keypoints is None:
                raise InputError("concatenated topology requires keypoint input")
            feats = tc.concat(self._image_features(images, mode, tape),
                              self._pose_features(keypoints, tape), 1, tape)
        else:
            if keypoints is not None:
                raise InputError("image_only topology takes no keypoint input")
            feats = self._image_features(images, mode, tape)
        x = feats
        for fc in self.head_fcs[:-1]:
            x = activation(fc.forward(x, tape), "elu", tape)
        return self.head_fcs[-1].forward(x, tape)

    def forward(self, images: Tensor, keypoints: Tensor | None = None,
                mode: str = "infer") -> Tensor:
        """Class probabilities [B, num_classes]; rows sum to 1."""
        logits = self.forward_logits(images, keypoints, mode=mode).data
        z = logits - logits.max(axis=1, keepdims=True)
        ez = np.exp(z)
        return Tensor(ez / ez.sum(axis=1, keepdims=True))


def _build(topology: str, config: ModelConfig) -> Network:
    config.validate()
    net = Network(topology, config)
    seed = config.seed
    dtype = F32

    in_ch = config.image_channels
    for i, out_ch in enumerate(config.conv_channels):
        rng = _param_rng(seed, f"img_conv{i}_w")
        w = he_uniform((out_ch, in_ch, 3, 3), fan_in=in_ch * 9, rng=rng, dtype=dtype)
        b = Tensor(np.zeros(out_ch, dtype=dtype))
        net.image_convs.append(Conv2d(w, b, stride=1, padding="same"))
        net.image_bns.append(BatchNorm(
            Tensor(np.ones(out_ch, dtype=dtype)), Tensor(np.zeros(out_ch, dtype=dtype)),
            Tensor(np.zeros(out_ch, dtype=dtype)), Tensor(np.ones(out_ch, dtype=dtype)),
            eps=config.bn_eps, momentum=config.bn_momentum))
        in_ch = out_ch

    width = config.flatten_width
    for j, out_w in enumerate(config.image_fc_widths):
        rng = _param_rng(seed, f"img_fc{j}_w")
        net.image_fcs.append(Dense(he_uniform((out_w, width), width, rng, dtype),
                                   Tensor(np.zeros(out_w, dtype=dtype))))
        width = out_w
    image_out = width

    head_in = image_out
    if topology == TOPOLOGY_CONCAT:
        width = config.pose_input_dim
        for j, out_w in enumerate(config.pose_fc_widths):
            rng = _param_rng(seed, f"pose_fc{j}_w")
            net.pose_fcs.append(Dense(he_uniform((out_w, width), width, rng, dtype),
                                      Tensor(np.zeros(out_w, dtype=dtype))))
            width = out_w
        head_in = image_out + width

    widths = tuple(config.head_widths) + (config.num_classes,)
    width = head_in
    for k, out_w in enumerate(widths):
        rng = _param_rng(seed, f"head_fc{k}_w")
        scale = OUTPUT_INIT_SCALE if k == len(widths) - 1 else 1.0
        net.head_fcs.append(Dense(
            glorot_uniform((out_w, width), width, out_w, rng, dtype, scale=scale),
            Tensor(np.zeros(out_w, dtype=dtype))))
        width = out_w
    return net


def build_concatenated(config: ModelConfig) -> Network:
    return _build(TOPOLOGY_CONCAT, config)


def build_image_only(config: ModelConfig) -> Network:
    return _build(TOPOLOGY_IMAGE_ONLY, config)


def parameter_count(net: Network) -> int:
    return sum(t.size for _, t in net.parameters())


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(net: Network, config: ModelConfig, path, class_labels=None) -> None:
    """Checkpoint layout: "BDSL" | version u16 LE | meta-len u32 LE | meta
    JSON (topology, config, class labels) | embedded tensor archive | CRC-32
    of all preceding bytes."""
    if class_labels is None:
        class_labels = net.class_labels
    meta = {
        "topology": net.topology,
        "model": config.to_dict(),
        "class_labels": list(class_labels) if class_labels is not None else None,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    archive_bytes = D.archive_to_bytes(dict(net.named_tensors()))

    payload = bytearray()
    payload += CHECKPOINT_MAGIC
    payload += struct.pack("<H", CHECKPOINT_VERSION)
    payload += struct.pack("<I", len(meta_bytes))
    payload += meta_bytes
    payload += archive_bytes
    payload += struct.pack("<I", zlib.crc32(bytes(payload)))
    Path(path).write_bytes(bytes(payload))


def load_checkpoint(path):
    """Rebuild (Network, ModelConfig) from a checkpoint, bit-exact."""
    raw = Path(path).read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 2 + 4 + 4:
        raise FormatError("file too short to be a checkpoint")
    body, crc_bytes = raw[:-4], raw[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(body):
        raise FormatError("checksum mismatch (corrupted checkpoint)")
    if body[:4] != CHECKPOINT_MAGIC:
        raise FormatError("bad magic bytes")
    (version,) = struct.unpack("<H", body[4:6])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack("<I", body[6:10])
    if 10 + meta_len > len(body):
        raise FormatError("truncated checkpoint metadata")
    try:
        meta = json.loads(body[10 : 10 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"unparseable checkpoint metadata: {e}") from e
    if not isinstance(meta, dict) or "topology" not in meta or "model" not in meta:
        raise FormatError("checkpoint metadata missing required fields")
    topology = meta["topology"]
    if topology not in (TOPOLOGY_CONCAT, TOPOLOGY_IMAGE_ONLY):
        raise FormatError(f"unknown topology {topology!r}")
    try:
        config = ModelConfig.from_dict(meta["model"])
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise FormatError(f"invalid model config in checkpoint: {e}") from e

    tensors = D.archive_from_bytes(body[10 + meta_len :])

    net = _build(topology, config)
    expected = dict(net.named_tensors())
    if set(tensors.keys()) != set(expected.keys()):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise FormatError(f"tensor names mismatch (missing={missing}, extra={extra})")
    for name, target in expected.items():
        src = tensors[name]
        if src.shape != target.shape or src.dtype != target.dtype:
            raise FormatError(
                f"tensor {name!r} has shape {src.shape}/{src.dtype}, "
                f"expected {target.shape}/{target.dtype}")
        target.data[...] = src.data
    labels = meta.get("class_labels")
    net.class_labels = list(labels) if labels is not None else None
    return net, config
