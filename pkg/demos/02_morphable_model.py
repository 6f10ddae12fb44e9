"""The linear face model: coefficients in, vertices out.

Run: python3 demos/02_morphable_model.py
"""

import numpy as np

from facediff.morphable import (
    ExpressionSeq, IdentityShape, expressions_to_meshes, make_synthetic_model, mouth_opening,
)
from facediff.numerics import make_rng

# A desk-scale stand-in model (the real thing loads from a PAF + JSON
# sidecar through the same code path).
model = make_synthetic_model(seed=0)
print(f"model: {model.n_vertices} vertices, {model.n_shape} shape and "
      f"{model.n_expr} expression coefficients, {model.n_mouth} mouth params")

rng = make_rng(1)
beta = IdentityShape(rng.normal(size=model.n_shape))

# Animate: a slow jaw-like oscillation on the first mouth coefficient.
frames = np.zeros((50, model.n_expr), dtype=np.float32)
frames[:, model.mouth_param_ids[0]] = 0.5 * np.sin(np.linspace(0, 4 * np.pi, 50))
seq = ExpressionSeq(frames)

meshes = expressions_to_meshes(model, beta, seq)
opening = mouth_opening(meshes, model)
print(f"mesh sequence: {meshes.frames.shape} at {meshes.fps} fps")
print(f"mouth opening range over the clip: {opening.min() * 1000:.2f}mm "
      f"to {opening.max() * 1000:.2f}mm")

# Linearity: doubling a coefficient doubles its vertex offset.
base = expressions_to_meshes(model, beta, ExpressionSeq(np.zeros((1, model.n_expr)))).frames[0]
one = expressions_to_meshes(model, beta, ExpressionSeq(frames[:1])).frames[0] - base
two = expressions_to_meshes(model, beta, ExpressionSeq(2 * frames[:1])).frames[0] - base
print(f"linearity |2*offset(m) - offset(2m)| = {np.abs(2 * one - two).max():.2e}")
