#!/usr/bin/env python3
"""Tour of the tensor engine: building graphs, reverse-mode gradients,
checking them against finite differences, and the SGD-with-momentum update.
"""
import numpy as np

from benthiq import tensor as T
from benthiq.tensor import Parameter, Rng, Tensor, backward, sgd_step

print("== building a small graph ==")
rng = Rng(0)
x = Tensor(rng.normal((3, 4)), requires_grad=True)
w = Tensor(rng.normal((4, 2)), requires_grad=True)
y = T.gelu(T.matmul(x, w))
loss = (y * y).mean()
print(f"loss = {loss.item():.6f}  (graph of {y.op!r} -> {loss.op!r})")

backward(loss)
print(f"dx shape {x.grad.shape}, dw shape {w.grad.shape}")

print("\n== gradient vs central finite differences (step 1e-3) ==")
idx = (1, 2)
step = 1e-3
base = x.data.copy()


def loss_at(arr):
    return (lambda out: (out * out).mean().item())(T.gelu(T.matmul(Tensor(arr), Tensor(w.data))))


plus, minus = base.copy(), base.copy()
plus[idx] += step
minus[idx] -= step
fd = (loss_at(plus) - loss_at(minus)) / (2 * step)
print(f"analytic dx[{idx}] = {x.grad[idx]:+.6f}")
print(f"finite-diff      = {fd:+.6f}")

print("\n== softmax and layer norm contracts ==")
p = T.softmax(Tensor([1000.0, 1000.0, 999.0]), axis=0)
print("softmax([1000,1000,999]) =", np.round(p.data, 4), "(no overflow)")
ln = T.layer_norm(Tensor(rng.normal((2, 8), std=5.0)),
                  Tensor(np.ones(8, np.float32)), Tensor(np.zeros(8, np.float32)))
print("layer_norm row means ~0:", np.abs(ln.data.mean(axis=1)).max() < 1e-5)

print("\n== the SGD update rule: v <- 0.9v + (g + 1e-4*theta); theta <- theta - lr*v ==")
param = Parameter(np.array([0.0], np.float32), name="demo")
for step_i in range(3):
    param.tensor.grad = np.ones(1, np.float32)
    sgd_step([param], lr=1.0)
    print(f"step {step_i}: theta = {param.data[0]:+.4f}, momentum = {param.momentum[0]:.4f}")
print("momentum after two unit-gradient steps -> 0.9*1 + 1 = 1.9 (up to the decay term)")
