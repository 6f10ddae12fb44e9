from .adam import Adam, clip_global_norm
from .gradcheck import finite_difference_check
from .rng import make_rng, restore_rng, rng_state
from .tensor import (
    NumericsError,
    Tensor,
    as_tensor,
    backward,
    concat,
    constant,
    layer_norm,
    matmul,
    mse,
    param,
    softmax,
    take,
    zero_grads,
)

__all__ = [
    "Adam",
    "NumericsError",
    "Tensor",
    "as_tensor",
    "backward",
    "clip_global_norm",
    "concat",
    "constant",
    "finite_difference_check",
    "layer_norm",
    "make_rng",
    "matmul",
    "mse",
    "param",
    "restore_rng",
    "rng_state",
    "softmax",
    "take",
    "zero_grads",
]
