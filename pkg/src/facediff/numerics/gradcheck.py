"""Central-difference verification of tape gradients.

The check temporarily promotes parameters to float64 so the difference
quotient is not drowned by float32 rounding; the tape runs identically in
either precision, so this validates the same backward code the float32
training path uses.
"""

import numpy as np

from .tensor import NumericsError, backward, zero_grads


def finite_difference_check(f, params, h=1e-3):
    """Max over coordinates of |analytic - central difference| relative error.

    ``f`` is a no-argument callable returning a scalar Tensor computed
    from ``params``; it must be deterministic. Relative error is
    ``|a - fd| / (|fd| + 1e-8)`` per coordinate, maximized over all
    coordinates of all parameters.
    """
    if h <= 0:
        raise NumericsError("h must be positive")
    saved = [p.data for p in params]
    try:
        for p in params:
            p.data = p.data.astype(np.float64)
        zero_grads(params)
        out = f()
        if not np.all(np.isfinite(out.data)):
            raise NumericsError("non-finite function output")
        backward(out)
        analytic = [
            p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
        ]

        worst = 0.0
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = f().item()
                flat[i] = orig - h
                f_minus = f().item()
                flat[i] = orig
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise NumericsError("non-finite function output during probing")
                fd = (f_plus - f_minus) / (2.0 * h)
                err = abs(a.reshape(-1)[i] - fd) / (abs(fd) + 1e-8)
                worst = max(worst, err)
        return worst
    finally:
        for p, d in zip(params, saved):
            p.data = d
        zero_grads(params)
