"""Reverse-mode autodiff on numpy arrays, from scratch.

Builds a few small graphs, backpropagates, and cross-checks every
gradient against central finite differences with the bundled checker.
"""

import numpy as np

from chansum.gradcheck import gradient_check
from chansum.optim import Adam
from chansum.tensor import Tensor, add, bce_loss, matmul, mean_along, sigmoid, tanh

rng = np.random.default_rng(0)

print("== a two-layer scoring head, by hand ==")
x = Tensor(rng.standard_normal((6, 4)))
w1 = Tensor(rng.standard_normal((4, 3)) * 0.5, requires_grad=True)
b1 = Tensor(np.zeros(3), requires_grad=True)
w2 = Tensor(rng.standard_normal((3, 1)) * 0.5, requires_grad=True)
labels = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0])

def loss_fn():
    h = tanh(add(matmul(x, w1), b1))
    s = sigmoid(matmul(h, w2))
    return bce_loss(s, labels.reshape(6, 1))

loss = loss_fn()
loss.backward()
print(f"loss          {loss.item():.6f}")
print(f"w1 grad norm  {np.linalg.norm(w1.grad):.6f}")
print(f"w2 grad norm  {np.linalg.norm(w2.grad):.6f}")

print()
print("== the same gradients, checked against finite differences ==")
report = gradient_check(loss_fn, [("w1", w1), ("b1", b1), ("w2", w2)])
for p in report.params:
    print(f"{p.name:4s} max rel error {p.max_rel_error:.2e} over {p.checked_coords} coords")
print(f"passed at tolerance {report.tolerance:g}: {report.passed}")

print()
print("== a few steps of the optimizer drive the loss down ==")
opt = Adam([("w1", w1), ("b1", b1), ("w2", w2)], learning_rate=0.1)
for step in range(10):
    opt.zero_grad()
    loss = loss_fn()
    loss.backward()
    opt.step()
    if step % 3 == 0:
        print(f"step {step}  loss {loss.item():.6f}")
print(f"final   loss {loss_fn().item():.6f}")
