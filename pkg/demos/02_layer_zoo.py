"""A tour of the layer vocabulary: conv2d, max pool, batch norm, dense,
ReLU/ELU, and the fused softmax cross-entropy head."""
import numpy as np

from bdslnet import (
    BatchNorm,
    Conv2d,
    Dense,
    Tensor,
    activation,
    maxpool2x2,
    softmax_xent,
)

rng = np.random.default_rng(1)
f32 = np.float32

# -- conv2d: cross-correlation, same padding keeps H and W --------------

x = Tensor(rng.normal(size=(2, 3, 8, 8)).astype(f32))
conv = Conv2d(Tensor(rng.normal(size=(5, 3, 3, 3)).astype(f32) * 0.1),
              Tensor(np.zeros(5, dtype=f32)), stride=1, padding="same")
feat = conv.forward(x)
print("conv2d:", x.shape, "->", feat.shape)

# -- max pooling halves the spatial dims --------------------------------

pooled = maxpool2x2(feat)
print("maxpool2x2:", feat.shape, "->", pooled.shape)

# -- batch norm: batch statistics in train mode, running stats in infer --

bn = BatchNorm(Tensor(np.ones(5, dtype=f32)), Tensor(np.zeros(5, dtype=f32)),
               Tensor(np.zeros(5, dtype=f32)), Tensor(np.ones(5, dtype=f32)))
normed = bn.forward(pooled, mode="train")
print(f"batchnorm(train): per-channel mean ~ 0: {normed.data.mean(axis=(0, 2, 3)).round(6)}")
print(f"  running mean moved toward the batch mean: {bn.running_mean.data.round(4)}")

# -- dense + activations -------------------------------------------------

flat = Tensor(normed.data.reshape(2, -1))
dense = Dense(Tensor(rng.normal(size=(16, flat.shape[1])).astype(f32) * 0.05),
              Tensor(np.zeros(16, dtype=f32)))
hidden = activation(dense.forward(flat), "relu")
print("dense + relu:", flat.shape, "->", hidden.shape)
print("elu(-1) =", float(activation(Tensor(np.array([-1.0], dtype=f32)), 'elu').data[0]))

# -- softmax + cross-entropy: probabilities and the training loss --------

head = Dense(Tensor(rng.normal(size=(4, 16)).astype(f32) * 0.05),
             Tensor(np.zeros(4, dtype=f32)))
logits = head.forward(hidden)
probs, loss = softmax_xent(logits, np.array([0, 3]))
print("probs rows sum to", probs.data.sum(axis=1), "; loss =", float(loss.data))
print("uniform 4-way loss would be ln(4) =", float(np.log(4.0)))
