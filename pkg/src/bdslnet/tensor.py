"""Dense tensors plus reverse-mode gradient propagation over a recorded op tape.

Tensors wrap C-contiguous numpy arrays (row-major, f32 for training, f64 for
gradient-check builds). A forward pass executed against a GradTape records one
entry per primitive; backward replays the entries in exact reverse order and
accumulates gradients into a parameter -> Tensor map.
"""

from __future__ import annotations

import numpy as np

F32 = np.float32
F64 = np.float64


class TensorError(Exception):
    """Base for tensor-level failures."""


class SizeError(TensorError):
    """Shape/data length mismatch at tensor creation."""


class ShapeError(TensorError):
    """Incompatible operand shapes or dtypes."""


class GraphError(TensorError):
    """Backward requested for a value the tape never produced."""


class Tensor:
    """Dense n-dimensional array value.

    Immutable by convention once created; only the optimizer writes into
    ``data`` in place, between forward passes.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data)
        if arr.dtype not in (F32, F64):
            arr = arr.astype(F32)
        self.data = np.ascontiguousarray(arr)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def copy(self):
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name})"


def tensor_create(shape, fill=0.0, dtype=F32) -> Tensor:
    """Build a tensor of ``shape`` from a scalar fill or a flat data array."""
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise SizeError("shape must be nonempty")
    if any(d < 1 for d in shape):
        raise SizeError(f"all dimensions must be >= 1, got {shape}")
    n = int(np.prod(shape))
    if np.isscalar(fill):
        return Tensor(np.full(shape, fill, dtype=dtype))
    data = np.asarray(fill, dtype=dtype)
    if data.size != n:
        raise SizeError(f"data length {data.size} != product(shape) {n}")
    return Tensor(data.reshape(shape))


def _check_same_dtype(*tensors):
    dt = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != dt:
            raise ShapeError(f"mixed dtypes {dt} vs {t.dtype}")
    return dt


class GradTape:
    """Ordered record of primitive ops; replayed in reverse for gradients."""

    def __init__(self):
        self._records = []        # (output, inputs, backward_fn)
        self._produced = set()    # id() of every output on the tape

    def record(self, output: Tensor, inputs, backward_fn):
        """Append one entry.

        ``backward_fn(grad_out)`` must return one gradient array (or None)
        per input, each matching that input's shape.
        """
        self._records.append((output, tuple(inputs), backward_fn))
        self._produced.add(id(output))

    def backward(self, loss: Tensor, params) -> dict:
        """Gradient of ``loss`` w.r.t. every tensor in ``params``.

        Parameters not on the path to the loss get zero gradients.
        """
        if id(loss) not in self._produced:
            raise GraphError("loss was not produced through this tape")
        if loss.size != 1:
            raise ShapeError(f"loss must be a 1-element tensor, got shape {loss.shape}")

        grads = {id(loss): np.ones_like(loss.data)}
        for output, inputs, backward_fn in reversed(self._records):
            g_out = grads.get(id(output))
            if g_out is None:
                continue
            in_grads = backward_fn(g_out)
            for t, g in zip(inputs, in_grads):
                if g is None:
                    continue
                acc = grads.get(id(t))
                if acc is None:
                    grads[id(t)] = g.copy() if g.base is not None or g is g_out else g
                else:
                    acc += g

        out = {}
        for p in params:
            g = grads.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            out[p] = Tensor(g)
        return out


def add(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    _check_same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g, g))
    return out


def mul(a: Tensor, b: Tensor, tape: GradTape | None = None) -> Tensor:
    _check_same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g * b.data, g * a.data))
    return out


def sum_all(a: Tensor, tape: GradTape | None = None) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.dtype))
    if tape is not None:
        tape.record(out, (a,), lambda g: (np.broadcast_to(g, a.shape).astype(a.dtype, copy=True),))
    return out


def reshape(a: Tensor, shape, tape: GradTape | None = None) -> Tensor:
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: {a.shape} -> {shape}")
    out = Tensor(a.data.reshape(shape))
    if tape is not None:
        tape.record(out, (a,), lambda g: (g.reshape(a.shape),))
    return out


def concat(a: Tensor, b: Tensor, axis: int, tape: GradTape | None = None) -> Tensor:
    """Join ``a`` then ``b`` along ``axis``; backward splits at the boundary."""
    _check_same_dtype(a, b)
    if a.ndim != b.ndim:
        raise ShapeError(f"concat: rank {a.ndim} vs {b.ndim}")
    if not 0 <= axis < a.ndim:
        raise ShapeError(f"concat: axis {axis} out of range for rank {a.ndim}")
    for d in range(a.ndim):
        if d != axis and a.shape[d] != b.shape[d]:
            raise ShapeError(f"concat: off-axis dim {d} differs ({a.shape} vs {b.shape})")
    out = Tensor(np.concatenate([a.data, b.data], axis=axis))
    if tape is not None:
        n = a.shape[axis]

        def backward(g):
            ga, gb = np.split(g, [n], axis=axis)
            return ga, gb

        tape.record(out, (a, b), backward)
    return out


def split(t: Tensor, boundary: int, axis: int):
    """Inverse of concat: cut ``t`` at ``boundary`` along ``axis``."""
    ga, gb = np.split(t.data, [boundary], axis=axis)
    return Tensor(ga), Tensor(gb)
