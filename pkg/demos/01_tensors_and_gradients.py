"""Tensors, the gradient tape, and finite-difference verification.

Every forward op executed against a GradTape records its backward rule;
replaying the tape in reverse yields gradients for any parameter set.
"""
import numpy as np

from bdslnet import GradTape, Tensor, add, concat, mul, sum_all, tensor_create
from bdslnet.gradcheck import max_rel_error, numeric_gradient

# -- creating tensors ---------------------------------------------------

zeros = tensor_create([2, 2], fill=0)
ramp = tensor_create([3], fill=[1.0, 2.0, 3.0])
print("zeros:", zeros.data.tolist())
print("ramp:", ramp.data.tolist())

# -- recording a forward pass and walking it backward -------------------

p = tensor_create([3], fill=[3.0, -1.0, 0.5])
tape = GradTape()
loss = sum_all(mul(p, p, tape), tape)         # loss = sum(p * p)
grads = tape.backward(loss, [p])
print("d(sum p^2)/dp =", grads[p].data.tolist(), "(expected 2p)")

# -- concat joins features; its backward splits the gradient ------------

a = tensor_create([1, 3], fill=[1, 2, 3])
b = tensor_create([1, 1], fill=[9])
tape = GradTape()
joined = concat(a, b, 1, tape)
print("concat:", joined.data.tolist())
grads = tape.backward(sum_all(joined, tape), [a, b])
print("grad wrt a:", grads[a].data.tolist(), " grad wrt b:", grads[b].data.tolist())

# -- analytic gradients agree with central finite differences -----------

rng = np.random.default_rng(0)
x = Tensor(rng.normal(size=(2, 3)).astype(np.float64))
y = Tensor(rng.normal(size=(2, 3)).astype(np.float64))


def forward(t):
    return sum_all(mul(add(x, y, t), x, t), t)


tape = GradTape()
analytic = tape.backward(forward(tape), [x])[x].data
numeric = numeric_gradient(lambda: forward(None).item(), x.data)
print(f"finite-difference agreement: max rel err = {max_rel_error(analytic, numeric):.2e}")
