"""Shared network building blocks on top of the autodiff substrate.

Parameters live in a flat name -> Tensor dict owned by the enclosing
model, which keeps checkpoint serialization trivial.
"""

import numpy as np

from .numerics import Tensor, concat, layer_norm, param, softmax

NEG_INF = np.float32(-np.inf)


def init_linear(params, name, d_in, d_out, rng, bias=True, scale=None):
    if scale is None:
        scale = np.sqrt(2.0 / (d_in + d_out))
    params[f"{name}.w"] = param(rng.normal(scale=scale, size=(d_in, d_out)).astype(np.float32))
    if bias:
        params[f"{name}.b"] = param(np.zeros(d_out, dtype=np.float32))


def linear(params, name, x):
    y = x @ params[f"{name}.w"]
    b = params.get(f"{name}.b")
    return y if b is None else y + b


def init_layer_norm(params, name, width):
    params[f"{name}.g"] = param(np.ones(width, dtype=np.float32))
    params[f"{name}.b"] = param(np.zeros(width, dtype=np.float32))


def norm(params, name, x):
    return layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def gelu(x):
    # tanh approximation; composed from primitives so the tape covers it
    inner = (x + (x * x * x) * 0.044715) * 0.7978845608028654
    return x * 0.5 * (inner.tanh() + 1.0)


def init_attention(params, name, width, rng):
    # no q/k biases: softmax is invariant to per-row logit shifts, which
    # would leave exactly-dead parameters in the tape
    for proj in ("wq", "wk", "wv"):
        init_linear(params, f"{name}.{proj}", width, width, rng, bias=False)
    init_linear(params, f"{name}.wo", width, width, rng)


def attention(params, name, q_x, kv_x, heads, mask=None):
    """Multi-head attention; ``mask`` is an additive (Tq, Tk) array.

    Disallowed positions carry -inf and come out of softmax as exact
    zeros (every row must keep at least one allowed position).
    """
    tq, width = q_x.shape
    tk = kv_x.shape[0]
    if width % heads:
        raise ValueError(f"width {width} not divisible by {heads} heads")
    hd = width // heads
    q = linear(params, f"{name}.wq", q_x).reshape(tq, heads, hd).transpose((1, 0, 2))
    k = linear(params, f"{name}.wk", kv_x).reshape(tk, heads, hd).transpose((1, 0, 2))
    v = linear(params, f"{name}.wv", kv_x).reshape(tk, heads, hd).transpose((1, 0, 2))
    scores = (q @ k.transpose((0, 2, 1))) * (1.0 / np.sqrt(hd))
    if mask is not None:
        scores = scores + Tensor(mask.reshape(1, tq, tk))
    out = softmax(scores, axis=-1) @ v
    out = out.transpose((1, 0, 2)).reshape(tq, width)
    return linear(params, f"{name}.wo", out)


def init_block(params, name, width, rng, cross=False, ffn_mult=4):
    init_layer_norm(params, f"{name}.ln1", width)
    init_attention(params, f"{name}.self", width, rng)
    if cross:
        init_layer_norm(params, f"{name}.lnx", width)
        init_attention(params, f"{name}.cross", width, rng)
    init_layer_norm(params, f"{name}.ln2", width)
    init_linear(params, f"{name}.ff1", width, ffn_mult * width, rng)
    init_linear(params, f"{name}.ff2", ffn_mult * width, width, rng)


def block(params, name, x, heads, memory=None, self_mask=None, cross_mask=None):
    """Pre-norm transformer block: self-attn [+ cross-attn] + feed-forward."""
    h = norm(params, f"{name}.ln1", x)
    x = x + attention(params, f"{name}.self", h, h, heads, mask=self_mask)
    if memory is not None:
        h = norm(params, f"{name}.lnx", x)
        x = x + attention(params, f"{name}.cross", h, memory, heads, mask=cross_mask)
    h = norm(params, f"{name}.ln2", x)
    x = x + linear(params, f"{name}.ff2", gelu(linear(params, f"{name}.ff1", h)))
    return x


def sinusoidal_encoding(length, width):
    """Fixed sin/cos positional table, shape (length, width), float32."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange((width + 1) // 2, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, 2.0 * i / width)
    table = np.zeros((length, width), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles[:, : width // 2])
    return table.astype(np.float32)


def step_encoding(n, width):
    """Sinusoidal embedding of a scalar diffusion step, shape (width,)."""
    return sinusoidal_encoding(int(n) + 1, width)[-1]


def band_mask(tq, tk, radius):
    """Additive mask allowing |i - j| <= radius, else -inf."""
    i = np.arange(tq)[:, None]
    j = np.arange(tk)[None, :]
    allowed = np.abs(i - j) <= radius
    mask = np.where(allowed, np.float32(0.0), NEG_INF).astype(np.float32)
    return mask


def stack_rows(rows):
    """Stack 1-D tensors into a (len, width) tensor."""
    return concat([r.reshape(1, -1) for r in rows], axis=0)
