"""Minimal reverse-mode autodiff over dense numpy arrays.

Rank 0..3 float tensors, row-major float32 by default (float64 is allowed
so the gradient checker can run at higher precision). Each operation
records a backward closure on the output node; ``backward(loss)`` walks
the tape in reverse topological order and accumulates ``dL/dx`` into the
``grad`` buffer of every reachable node with ``requires_grad``.

Repeated backward calls accumulate; call ``zero_grads`` between steps.
"""

import numpy as np


class NumericsError(Exception):
    pass


def _as_float_array(data):
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    if arr.ndim > 3:
        raise NumericsError(f"rank {arr.ndim} > 3 unsupported")
    return arr


class Tensor:
    """A node in the computation tape.

    data: numpy array, row-major. grad: same-shape buffer or None.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as_float_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)

    def zero_grad(self):
        self.grad = None

    def item(self):
        if self.data.size != 1:
            raise NumericsError("item() on non-scalar tensor")
        return float(self.data.reshape(()))

    # ---- arithmetic -------------------------------------------------

    def __add__(self, other):
        return _elementwise2(self, other, np.add, lambda a, b, g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        return _elementwise2(self, other, np.subtract, lambda a, b, g: (g, -g))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        return _elementwise2(self, other, np.multiply, lambda a, b, g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return _elementwise2(
            self, other, np.divide, lambda a, b, g: (g / b, -g * a / (b * b))
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return self * -1.0

    def __pow__(self, p):
        p = float(p)
        out = _node(self.data**p, (self,))
        if out.requires_grad:

            def bwd(g, a=self.data):
                self._accumulate(g * p * a ** (p - 1.0))

            out._backward = bwd
        return out

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        out = _node(self.data[key], (self,))
        if out.requires_grad:

            def bwd(g):
                full = np.zeros_like(self.data)
                np.add.at(full, key, g)
                self._accumulate(full)

            out._backward = bwd
        return out

    # ---- shape ------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.reshape(self.data.shape))
        return out

    def transpose(self, axes=None):
        if axes is None:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        out = _node(self.data.transpose(axes), (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g.transpose(inv))
        return out

    # ---- reductions -------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out.requires_grad:

            def bwd(g):
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.data.shape))

            out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ---- elementwise nonlinear --------------------------------------

    def exp(self):
        y = np.exp(self.data)
        out = _node(y, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * y)
        return out

    def tanh(self):
        y = np.tanh(self.data)
        out = _node(y, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * (1.0 - y * y))
        return out

    def sqrt(self):
        y = np.sqrt(self.data)
        out = _node(y, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * 0.5 / y)
        return out

    def relu(self):
        y = np.maximum(self.data, 0)
        out = _node(y, (self,))
        if out.requires_grad:
            out._backward = lambda g: self._accumulate(g * (self.data > 0))
        return out


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def param(data):
    """A trainable leaf tensor."""
    return Tensor(np.array(data), requires_grad=True)


def constant(data):
    return Tensor(data, requires_grad=False)


def _node(data, parents):
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
    return out


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _elementwise2(a, b, fwd, grads):
    a, b = as_tensor(a), as_tensor(b)
    out = _node(fwd(a.data, b.data), (a, b))
    if out.requires_grad:

        def bwd(g):
            ga, gb = grads(a.data, b.data, g)
            if a.requires_grad:
                a._accumulate(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(gb, b.data.shape))

        out._backward = bwd
    return out


def matmul(a, b):
    """Matrix product. Supports 2Dx2D, 3Dx3D (batched), and 1D edge cases."""
    a, b = as_tensor(a), as_tensor(b)
    out = _node(a.data @ b.data, (a, b))
    if out.requires_grad:
        na, nb = a.data.ndim, b.data.ndim

        def bwd(g):
            if na == 2 and nb == 2:
                ga, gb = g @ b.data.T, a.data.T @ g
            elif na == 3 and nb == 3:
                ga = g @ b.data.transpose(0, 2, 1)
                gb = a.data.transpose(0, 2, 1) @ g
            elif na == 2 and nb == 1:
                ga, gb = np.outer(g, b.data), a.data.T @ g
            elif na == 1 and nb == 2:
                ga, gb = g @ b.data.T, np.outer(a.data, g)
            elif na == 1 and nb == 1:
                ga, gb = g * b.data, g * a.data
            else:
                raise NumericsError(f"matmul ranks ({na}, {nb}) unsupported")
            if a.requires_grad:
                a._accumulate(ga)
            if b.requires_grad:
                b._accumulate(gb)

        out._backward = bwd
    return out


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = _node(np.concatenate([t.data for t in tensors], axis=axis), tensors)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def bwd(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if not t.requires_grad:
                    continue
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(int(lo), int(hi))
                t._accumulate(g[tuple(idx)])

        out._backward = bwd
    return out


def take(x, indices, axis=0):
    """Gather along ``axis`` (embedding lookup, column subsets)."""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.int64)
    out = _node(np.take(x.data, indices, axis=axis), (x,))
    if out.requires_grad:

        def bwd(g):
            full = np.zeros_like(x.data)
            moved = np.moveaxis(full, axis, 0)
            np.add.at(moved, indices, np.moveaxis(g, axis, 0))
            x._accumulate(full)

        out._backward = bwd
    return out


def softmax(x, axis=-1):
    """Stable softmax; rows of -inf-masked entries come out as exact zeros."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _node(y, (x,))
    if out.requires_grad:

        def bwd(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate((g - dot) * y)

        out._backward = bwd
    return out


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = xc * inv
    out = _node(gamma.data * xhat + beta.data, (x, gamma, beta))
    if out.requires_grad:

        def bwd(g):
            axes = tuple(range(g.ndim - 1))
            if gamma.requires_grad:
                gamma._accumulate(_unbroadcast((g * xhat).sum(axis=axes), gamma.data.shape))
            if beta.requires_grad:
                beta._accumulate(_unbroadcast(g.sum(axis=axes), beta.data.shape))
            if x.requires_grad:
                dxhat = g * gamma.data
                s1 = dxhat.sum(axis=-1, keepdims=True)
                s2 = (dxhat * xhat).sum(axis=-1, keepdims=True)
                x._accumulate(inv / n * (n * dxhat - s1 - xhat * s2))

        out._backward = bwd
    return out


def mse(a, b):
    """Mean over all elements of the squared difference."""
    d = as_tensor(a) - as_tensor(b)
    return (d * d).mean()


def backward(loss):
    """Populate gradient buffers of everything reachable from ``loss``.

    ``loss`` must be a scalar. Repeated calls accumulate into ``grad``.
    """
    loss = as_tensor(loss)
    if loss.data.size != 1:
        raise NumericsError(f"backward() needs a scalar, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    loss._accumulate(np.ones_like(loss.data))
    for node in order:
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _toposort(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return list(reversed(order))


def zero_grads(params):
    for p in params:
        p.zero_grad()
