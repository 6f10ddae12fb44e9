"""Adam optimizer with bias correction."""

import numpy as np

from .tensor import NumericsError


class Adam:
    """Standard Adam over a list of parameter tensors.

    Moment buffers match parameter shapes; the step counter starts at 0
    and increases by one per ``step``. A NaN/inf gradient rejects the
    whole step so a bad batch cannot poison the weights.
    """

    def __init__(self, params, learning_rate=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        grads = []
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericsError("non-finite gradient, step rejected")
            grads.append(g)
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / b1t
            v_hat = v / b2t
            p.data -= (self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)).astype(
                p.data.dtype
            )

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_arrays(self):
        """Flat name->array map of moment buffers, for checkpointing."""
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"adam.m.{i}"] = m
            out[f"adam.v.{i}"] = v
        return out

    def load_state_arrays(self, arrays, t):
        for i in range(len(self.params)):
            self.m[i] = arrays[f"adam.m.{i}"].astype(self.m[i].dtype).reshape(self.m[i].shape)
            self.v[i] = arrays[f"adam.v.{i}"].astype(self.v[i].dtype).reshape(self.v[i].shape)
        self.t = int(t)


def clip_global_norm(params, max_norm):
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm
