"""A tour of the numerics substrate: tape autodiff, gradient checking,
and Adam on a toy objective.

Run: python3 demos/01_autodiff_and_optimizer.py
"""

import numpy as np

from facediff.numerics import (
    Adam, Tensor, backward, finite_difference_check, make_rng, param, softmax, zero_grads,
)

rng = make_rng(0)

# Everything above the substrate is written against Tensor: record a
# computation, call backward, read gradients.
x = param(np.float32(3.0))
y = x * x
backward(y)
print(f"d/dx x^2 at x=3  ->  {x.grad}")

# softmax rows sum to one, so the summed output is constant and the
# gradient vanishes.
z = param(rng.normal(size=6).astype(np.float32))
backward(softmax(z).sum())
print(f"grad of sum(softmax(z)): max |g| = {np.abs(z.grad).max():.2e}")

# The gradient checker compares the tape against central differences.
w = param(rng.normal(size=(4, 4)).astype(np.float32))
v = Tensor(rng.normal(size=4).astype(np.float32))
err = finite_difference_check(lambda: ((w @ v) ** 2.0).sum(), [w], h=1e-3)
print(f"finite-difference check on |Wv|^2: rel err {err:.2e}")

# Adam walks a quadratic bowl to its minimum.
p = param(np.float32(0.0))
opt = Adam([p], learning_rate=0.1)
for _ in range(500):
    zero_grads([p])
    backward((p - 5.0) ** 2.0)
    opt.step()
print(f"argmin of (x-5)^2 after 500 Adam steps: {p.item():.4f}")
