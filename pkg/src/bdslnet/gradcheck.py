"""Central finite-difference verification of every backward rule.

The numeric side never touches the tape: it re-runs the forward with single
entries perturbed in place (h = 1e-5 * max(1, |x|)) and compares against the
analytic gradients at f64. Inputs for kinked ops (relu/elu/maxpool) are drawn
away from the kinks so the difference quotient stays on one branch.
"""

from __future__ import annotations

import numpy as np

from . import layers
from . import tensor as tc
from .tensor import F64, GradTape, Tensor

H_SCALE = 1e-5
TOLERANCE = 1e-4

# order matters: the cli prints rows in this order
KINDS = (
    "add",
    "mul",
    "sum",
    "reshape",
    "concat",
    "conv2d",
    "batchnorm",
    "maxpool",
    "dense",
    "relu",
    "elu",
    "softmax_xent",
)


def numeric_gradient(f, x: np.ndarray) -> np.ndarray:
    """Central-difference gradient of scalar-valued ``f()`` w.r.t. ``x``,
    perturbing ``x`` in place entry by entry."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = H_SCALE * max(1.0, abs(float(orig)))
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max())


def _away_from_zero(rng, shape, low=0.05, high=1.0):
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return (mag * sign).astype(F64)


def _distinct_values(rng, shape):
    # permutation grid: pairwise gaps >= 0.01, far beyond the FD step
    n = int(np.prod(shape))
    return (rng.permutation(n).astype(F64) * 0.01 - 0.005 * n).reshape(shape)


def _check(wrapped_tensors, forward):
    """Compare taped gradients of forward() against finite differences.

    ``forward(tape)`` must return a scalar loss Tensor built from the wrapped
    tensors; returns the max relative error over all of them.
    """
    tape = GradTape()
    loss = forward(tape)
    grads = tape.backward(loss, wrapped_tensors)
    worst = 0.0
    for t in wrapped_tensors:
        numeric = numeric_gradient(lambda: forward(None).item(), t.data)
        worst = max(worst, max_rel_error(grads[t].data, numeric))
    return worst


def _projected(out: Tensor, weights: Tensor, tape):
    # fixed random projection turns any output into a scalar objective
    return tc.sum_all(tc.mul(out, weights, tape), tape)


def check_add(rng, case):
    shape = [(3,), (2, 4), (2, 3, 2)][case]
    a = Tensor(rng.normal(size=shape).astype(F64))
    b = Tensor(rng.normal(size=shape).astype(F64))
    r = Tensor(rng.normal(size=shape).astype(F64))
    return _check([a, b], lambda tape: _projected(tc.add(a, b, tape), r, tape))


def check_mul(rng, case):
    shape = [(4,), (3, 3), (2, 2, 3)][case]
    a = Tensor(rng.normal(size=shape).astype(F64))
    b = Tensor(rng.normal(size=shape).astype(F64))
    r = Tensor(rng.normal(size=shape).astype(F64))
    return _check([a, b], lambda tape: _projected(tc.mul(a, b, tape), r, tape))


def check_sum(rng, case):
    shape = [(5,), (3, 4), (2, 2, 2)][case]
    a = Tensor(rng.normal(size=shape).astype(F64))
    return _check([a], lambda tape: tc.sum_all(a, tape))


def check_reshape(rng, case):
    shape, new = [((6,), (2, 3)), ((2, 6), (3, 4)), ((2, 2, 3), (12,))][case]
    a = Tensor(rng.normal(size=shape).astype(F64))
    r = Tensor(rng.normal(size=new).astype(F64))
    return _check([a], lambda tape: _projected(tc.reshape(a, new, tape), r, tape))


def check_concat(rng, case):
    sa, sb, axis = [((2, 3), (2, 2), 1), ((1, 4), (2, 4), 0), ((2, 2, 2), (2, 3, 2), 1)][case]
    a = Tensor(rng.normal(size=sa).astype(F64))
    b = Tensor(rng.normal(size=sb).astype(F64))
    out_shape = list(sa)
    out_shape[axis] += sb[axis]
    r = Tensor(rng.normal(size=tuple(out_shape)).astype(F64))
    return _check([a, b], lambda tape: _projected(tc.concat(a, b, axis, tape), r, tape))


def check_conv2d(rng, case):
    (B, C, H, W), (O, k), stride, padding = [
        ((2, 2, 5, 5), (3, 3), 1, "same"),
        ((1, 1, 4, 6), (2, 3), 1, "valid"),
        ((2, 3, 6, 6), (2, 3), 2, "same"),
    ][case]
    x = Tensor(rng.normal(size=(B, C, H, W)).astype(F64))
    w = Tensor(rng.normal(size=(O, C, k, k)).astype(F64))
    b = Tensor(rng.normal(size=(O,)).astype(F64))
    layer = layers.Conv2d(w, b, stride=stride, padding=padding)
    probe = layer.forward(x)
    r = Tensor(rng.normal(size=probe.shape).astype(F64))
    return _check([x, w, b], lambda tape: _projected(layer.forward(x, tape), r, tape))


def check_batchnorm(rng, case):
    shape = [(4, 3), (3, 2, 4, 4), (2, 5)][case]
    ch = shape[1]
    x = Tensor(rng.normal(size=shape).astype(F64))
    gamma = Tensor(rng.uniform(0.5, 1.5, size=ch).astype(F64))
    beta = Tensor(rng.normal(size=ch).astype(F64))
    bn = layers.BatchNorm(
        gamma, beta,
        Tensor(np.zeros(ch, dtype=F64)), Tensor(np.ones(ch, dtype=F64)),
    )
    r = Tensor(rng.normal(size=shape).astype(F64))
    return _check([x, gamma, beta],
                  lambda tape: _projected(bn.forward(x, tape, mode="train"), r, tape))


def check_maxpool(rng, case):
    shape = [(1, 1, 4, 4), (2, 2, 6, 4), (1, 3, 2, 8)][case]
    x = Tensor(_distinct_values(rng, shape))
    B, C, H, W = shape
    r = Tensor(rng.normal(size=(B, C, H // 2, W // 2)).astype(F64))
    return _check([x], lambda tape: _projected(layers.maxpool2x2(x, tape), r, tape))


def check_dense(rng, case):
    B, din, dout = [(2, 3, 4), (1, 5, 2), (4, 4, 4)][case]
    x = Tensor(rng.normal(size=(B, din)).astype(F64))
    w = Tensor(rng.normal(size=(dout, din)).astype(F64))
    b = Tensor(rng.normal(size=(dout,)).astype(F64))
    layer = layers.Dense(w, b)
    r = Tensor(rng.normal(size=(B, dout)).astype(F64))
    return _check([x, w, b], lambda tape: _projected(layer.forward(x, tape), r, tape))


def _check_activation(rng, case, kind):
    shape = [(6,), (2, 5), (2, 2, 3)][case]
    x = Tensor(_away_from_zero(rng, shape))
    r = Tensor(rng.normal(size=shape).astype(F64))
    return _check([x], lambda tape: _projected(layers.activation(x, kind, tape), r, tape))


def check_relu(rng, case):
    return _check_activation(rng, case, "relu")


def check_elu(rng, case):
    return _check_activation(rng, case, "elu")


def check_softmax_xent(rng, case):
    B, K = [(3, 4), (2, 7), (5, 3)][case]
    x = Tensor(rng.normal(size=(B, K)).astype(F64))
    y = rng.integers(0, K, size=B)
    return _check([x], lambda tape: layers.softmax_xent(x, y, tape)[1])


_CHECKS = {
    "add": check_add,
    "mul": check_mul,
    "sum": check_sum,
    "reshape": check_reshape,
    "concat": check_concat,
    "conv2d": check_conv2d,
    "batchnorm": check_batchnorm,
    "maxpool": check_maxpool,
    "dense": check_dense,
    "relu": check_relu,
    "elu": check_elu,
    "softmax_xent": check_softmax_xent,
}


def run_suite(seed: int = 0, n_seeds: int = 5, kinds=KINDS) -> dict:
    """Max relative FD error per op kind, over n_seeds seeds x 3 shapes."""
    results = {}
    for ki, kind in enumerate(kinds):
        worst = 0.0
        for si in range(n_seeds):
            for case in range(3):
                rng = np.random.Generator(np.random.PCG64(
                    np.random.SeedSequence([seed, ki, si, case])))
                worst = max(worst, _CHECKS[kind](rng, case))
        results[kind] = worst
    return results
