"""Tour of the float64 autodiff core: build a graph, backprop, cross-check.

Run from the repository root:

    python3 demos/01_autodiff_basics.py
"""

import numpy as np

from capsroute import Tensor, check_gradient, fd_gradient, no_grad
from capsroute.tensor import matmul, relu, softmax, tensor_sum, vector_norm

rng = np.random.default_rng(0)

# --- 1. forward + backward through a tiny expression --------------------
print("== a tiny graph: y = sum(relu(x @ w)) ==")
x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
y = tensor_sum(relu(matmul(x, w)))
y.backward()
print(f"y      = {y.data:.6f}")
print(f"x.grad =\n{np.array2string(x.grad, precision=4)}")
print("(zero rows/entries are inputs the relu gated off)")

# --- 2. agree with central finite differences ----------------------------
print()
print("== analytic vs finite-difference gradients ==")
x2 = Tensor(rng.normal(size=(2, 3)), requires_grad=True)


def loss_fn() -> Tensor:
    return tensor_sum(softmax(x2, axis=1) * softmax(x2, axis=1))


analytic = loss_fn()
analytic.backward()
numeric = fd_gradient(loss_fn, x2)
err = np.max(np.abs(x2.grad - numeric))
print(f"max |analytic - numeric| = {err:.3e}")

result = check_gradient("demo.softmax_squared", loss_fn, x2, tolerance=1e-6)
print(result.line())

# --- 3. vector_norm keeps zero vectors differentiable --------------------
print()
print("== vector_norm at the origin ==")
z = Tensor(np.zeros((1, 3)), requires_grad=True)
n = tensor_sum(vector_norm(z))
n.backward()
print(f"norm  = {n.data:.6f}")
print(f"grad  = {np.array2string(z.grad, precision=4)}  (finite, thanks to the eps inside sqrt)")

# --- 4. no_grad suppresses tape building ----------------------------------
print()
print("== no_grad ==")
with no_grad():
    silent = matmul(x, w)
print(f"inside no_grad, result.requires_grad = {silent.requires_grad}")
