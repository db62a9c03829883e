"""Differentiable layer vocabulary: conv2d, batch norm, max pool, dense,
ReLU/ELU activations, and the fused softmax + cross-entropy head.

Every forward records exactly one tape entry whose backward rule is derived
by hand and verified against central finite differences (see gradcheck).
Convolution is cross-correlation (no kernel flip).
"""

from __future__ import annotations

import numpy as np

from .tensor import GradTape, ShapeError, Tensor, TensorError


class DegenerateBatchError(TensorError):
    """Batch statistics requested for a batch of size 1."""


class LabelError(TensorError):
    """Class id outside [0, K)."""


def _pad_amount(kh, kw, padding):
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"same padding needs odd kernel dims, got {kh}x{kw}")
        return (kh - 1) // 2, (kw - 1) // 2
    if padding == "valid":
        return 0, 0
    raise ShapeError(f"unknown padding {padding!r}")


class Conv2d:
    """2-d cross-correlation with per-channel bias.

    weights: [out_ch, in_ch, kh, kw], bias: [out_ch]. Inputs are [B, C, H, W].
    """

    def __init__(self, weights: Tensor, bias: Tensor, stride: int = 1, padding: str = "same"):
        if weights.ndim != 4:
            raise ShapeError(f"conv weights must be 4-d, got {weights.shape}")
        if bias.shape != (weights.shape[0],):
            raise ShapeError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
        if stride < 1:
            raise ShapeError(f"stride must be positive, got {stride}")
        _pad_amount(weights.shape[2], weights.shape[3], padding)
        self.w = weights
        self.b = bias
        self.stride = int(stride)
        self.padding = padding

    def forward(self, x: Tensor, tape: GradTape | None = None) -> Tensor:
        if x.ndim != 4:
            raise ShapeError(f"conv input must be [B,C,H,W], got {x.shape}")
        out_ch, in_ch, kh, kw = self.w.shape
        B, C, H, W = x.shape
        if C != in_ch:
            raise ShapeError(f"conv expects {in_ch} input channels, got {C}")
        s = self.stride
        ph, pw = _pad_amount(kh, kw, self.padding)
        if H + 2 * ph < kh or W + 2 * pw < kw:
            raise ShapeError(f"input {H}x{W} smaller than kernel {kh}x{kw}")

        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
        Ho = (H + 2 * ph - kh) // s + 1
        Wo = (W + 2 * pw - kw) // s + 1

        w, b = self.w, self.b
        acc = np.zeros((B, Ho, Wo, out_ch), dtype=x.dtype)
        for u in range(kh):
            for v in range(kw):
                xs = xp[:, :, u : u + s * (Ho - 1) + 1 : s, v : v + s * (Wo - 1) + 1 : s]
                # [B,C,Ho,Wo] x [O,C] contracted over C -> [B,Ho,Wo,O]
                acc += np.tensordot(xs, w.data[:, :, u, v], axes=([1], [1]))
        out = Tensor(np.ascontiguousarray(acc.transpose(0, 3, 1, 2)) + b.data[None, :, None, None])

        if tape is not None:

            def backward(g):
                db = g.sum(axis=(0, 2, 3))
                dw = np.empty_like(w.data)
                dxp = np.zeros_like(xp)
                for u in range(kh):
                    for v in range(kw):
                        hi = u + s * (Ho - 1) + 1
                        wi = v + s * (Wo - 1) + 1
                        xs = xp[:, :, u:hi:s, v:wi:s]
                        dw[:, :, u, v] = np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))
                        # [B,O,Ho,Wo] x [O,C] over O -> [B,Ho,Wo,C]
                        dxs = np.tensordot(g, w.data[:, :, u, v], axes=([1], [0]))
                        dxp[:, :, u:hi:s, v:wi:s] += dxs.transpose(0, 3, 1, 2)
                dx = dxp[:, :, ph : ph + H, pw : pw + W] if (ph or pw) else dxp
                return dx, dw, db

            tape.record(out, (x, self.w, self.b), backward)
        return out


def maxpool2x2(x: Tensor, tape: GradTape | None = None) -> Tensor:
    """2x2 max pool, stride 2. Backward routes each window's gradient to the
    argmax position only (first in row-major scan on ties)."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool input must be [B,C,H,W], got {x.shape}")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"maxpool needs even H,W, got {H}x{W}")
    Ho, Wo = H // 2, W // 2
    # window axes last, in row-major window order: (0,0),(0,1),(1,0),(1,1)
    xw = x.data.reshape(B, C, Ho, 2, Wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, 4)
    idx = xw.argmax(axis=-1)
    out = Tensor(np.take_along_axis(xw, idx[..., None], axis=-1)[..., 0])

    if tape is not None:

        def backward(g):
            gw = np.zeros((B, C, Ho, Wo, 4), dtype=g.dtype)
            np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
            return (gw.reshape(B, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W),)

        tape.record(out, (x,), backward)
    return out


class BatchNorm:
    """Per-channel batch normalization with running statistics.

    Accepts [B,C,H,W] (normalizes over B,H,W per channel) or [B,D] inputs.
    Train mode uses batch statistics and updates the running ones as
    running <- momentum*running + (1-momentum)*batch; infer mode uses the
    running statistics and leaves them untouched.
    """

    def __init__(self, gamma: Tensor, beta: Tensor, running_mean: Tensor,
                 running_var: Tensor, eps: float = 1e-5, momentum: float = 0.99):
        ch = gamma.shape
        if not (beta.shape == running_mean.shape == running_var.shape == ch and len(ch) == 1):
            raise ShapeError("batchnorm parameter shapes must all be [ch]")
        if eps <= 0:
            raise ShapeError(f"eps must be > 0, got {eps}")
        if not 0 < momentum < 1:
            raise ShapeError(f"momentum must be in (0,1), got {momentum}")
        self.gamma = gamma
        self.beta = beta
        self.running_mean = running_mean
        self.running_var = running_var
        self.eps = float(eps)
        self.momentum = float(momentum)

    def _axes_and_bcast(self, x: Tensor):
        ch = self.gamma.shape[0]
        if x.ndim == 4:
            if x.shape[1] != ch:
                raise ShapeError(f"batchnorm expects {ch} channels, got {x.shape[1]}")
            return (0, 2, 3), (1, ch, 1, 1)
        if x.ndim == 2:
            if x.shape[1] != ch:
                raise ShapeError(f"batchnorm expects width {ch}, got {x.shape[1]}")
            return (0,), (1, ch)
        raise ShapeError(f"batchnorm input must be [B,C,H,W] or [B,D], got {x.shape}")

    def forward(self, x: Tensor, tape: GradTape | None = None, mode: str = "train") -> Tensor:
        if mode not in ("train", "infer"):
            raise ShapeError(f"unknown mode {mode!r}")
        axes, bc = self._axes_and_bcast(x)
        gamma = self.gamma.data.reshape(bc)
        beta = self.beta.data.reshape(bc)
        eps = x.dtype.type(self.eps)

        if mode == "infer":
            sigma = np.sqrt(self.running_var.data.reshape(bc) + eps)
            xhat = (x.data - self.running_mean.data.reshape(bc)) / sigma
            out = Tensor(gamma * xhat + beta)
            if tape is not None:

                def backward_infer(g):
                    dgamma = (g * xhat).sum(axis=axes)
                    dbeta = g.sum(axis=axes)
                    return g * gamma / sigma, dgamma, dbeta

                tape.record(out, (x, self.gamma, self.beta), backward_infer)
            return out

        if x.shape[0] < 2:
            raise DegenerateBatchError("train-mode batchnorm needs batch size >= 2")
        n = x.dtype.type(np.prod([x.shape[a] for a in axes]))
        mu = x.data.mean(axis=axes).reshape(bc)
        var = x.data.var(axis=axes).reshape(bc)
        sigma = np.sqrt(var + eps)
        xhat = (x.data - mu) / sigma
        out = Tensor(gamma * xhat + beta)

        m = x.dtype.type(self.momentum)
        self.running_mean.data[...] = m * self.running_mean.data + (1 - m) * mu.reshape(-1)
        self.running_var.data[...] = m * self.running_var.data + (1 - m) * var.reshape(-1)

        if tape is not None:

            def backward(g):
                dgamma = (g * xhat).sum(axis=axes)
                dbeta = g.sum(axis=axes)
                gsum = g.sum(axis=axes).reshape(bc)
                gx = (g * xhat).sum(axis=axes).reshape(bc)
                dx = (gamma / sigma) * (g - gsum / n - xhat * gx / n)
                return dx, dgamma, dbeta

            tape.record(out, (x, self.gamma, self.beta), backward)
        return out


class Dense:
    """Affine layer: out = x @ W.T + b with W [out_dim, in_dim]."""

    def __init__(self, weights: Tensor, bias: Tensor):
        if weights.ndim != 2:
            raise ShapeError(f"dense weights must be 2-d, got {weights.shape}")
        if bias.shape != (weights.shape[0],):
            raise ShapeError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
        self.w = weights
        self.b = bias

    def forward(self, x: Tensor, tape: GradTape | None = None) -> Tensor:
        if x.ndim != 2:
            raise ShapeError(f"dense input must be [B,in_dim], got {x.shape}")
        out_dim, in_dim = self.w.shape
        if x.shape[1] != in_dim:
            raise ShapeError(f"dense expects width {in_dim}, got {x.shape[1]}")
        out = Tensor(x.data @ self.w.data.T + self.b.data)

        if tape is not None:

            def backward(g):
                return g @ self.w.data, g.T @ x.data, g.sum(axis=0)

            tape.record(out, (x, self.w, self.b), backward)
        return out


def activation(x: Tensor, kind: str, tape: GradTape | None = None) -> Tensor:
    """Elementwise relu (max(x,0)) or elu (alpha=1: x if x>0 else e^x - 1)."""
    if kind == "relu":
        out = Tensor(np.maximum(x.data, 0))
        if tape is not None:
            mask = x.data > 0
            tape.record(out, (x,), lambda g: (g * mask,))
        return out
    if kind == "elu":
        pos = x.data > 0
        expm1 = np.expm1(np.minimum(x.data, 0))
        out = Tensor(np.where(pos, x.data, expm1))
        if tape is not None:
            # d/dx = 1 for x>0 else e^x = out+1
            tape.record(out, (x,), lambda g: (g * np.where(pos, x.dtype.type(1), expm1 + 1),))
        return out
    raise ShapeError(f"unknown activation {kind!r}")


def softmax_xent(logits: Tensor, labels, tape: GradTape | None = None):
    """Row-wise shifted softmax plus mean cross-entropy over the batch.

    Returns (probs [B,K], loss scalar). The combined backward into the
    logits is (probs - onehot)/B.
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be [B,K], got {logits.shape}")
    B, K = logits.shape
    y = np.asarray(labels)
    if y.shape != (B,):
        raise LabelError(f"labels must be a length-{B} vector, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise LabelError(f"labels must be integers, got dtype {y.dtype}")
    if y.min() < 0 or y.max() >= K:
        raise LabelError(f"labels must lie in [0,{K})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    probs = ez / denom
    logp = z - np.log(denom)
    loss = Tensor(np.asarray(-logp[np.arange(B), y].mean(), dtype=logits.dtype))

    if tape is not None:

        def backward(g):
            d = probs.copy()
            d[np.arange(B), y] -= 1
            return (d * (g / logits.dtype.type(B)),)

        tape.record(loss, (logits,), backward)
    return Tensor(probs), loss
