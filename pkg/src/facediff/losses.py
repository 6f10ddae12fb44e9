"""Training objective: coefficient-space loss with mouth emphasis, a
style-preservation loss through the frozen style encoder, and geometric
losses (vertex, velocity, smoothness) in vertex space.

All squared norms reduce by mean over elements so the weights keep their
meaning across window sizes. The smoothness term penalizes the predicted
second difference only; it has no ground-truth counterpart, so a static
ground truth does not zero it.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import Tensor, mse


@dataclass
class LossWeights:
    lam_simple: float = 10.0
    lam_mouth: float = 10.0
    lam_style: float = 1.0
    lam_vertex: float = 200.0
    lam_velocity: float = 100.0
    lam_smooth: float = 100.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be >= 0")


def loss_simple(pred, gt, model, lam_mouth=10.0):
    """Coefficient MSE plus weighted MSE over the mouth parameter columns."""
    gt = _np(gt)
    if tuple(pred.shape) != gt.shape:
        raise ValueError(f"pred {tuple(pred.shape)} vs gt {gt.shape}")
    full = mse(pred, Tensor(gt))
    ids = model.mouth_param_ids
    from .numerics import take

    mouth = mse(take(pred, ids, axis=1), Tensor(gt[:, ids]))
    return full + mouth * float(lam_mouth)


def loss_style(style_model, pred, reference_embedding):
    """Squared distance between the pooled embeddings of the prediction
    and of the full reference sequence.

    The style encoder weights must be frozen; gradient flows into
    ``pred`` only. ``reference_embedding`` is precomputed (no grad).
    """
    s_pred = style_model.pool_graph(style_model.encode_graph(pred))
    ref = _np(reference_embedding).reshape(-1)
    return mse(s_pred, Tensor(ref))


def mesh_graph(model, beta, frames):
    """Differentiable synthesis: (T, k) frames -> (T, 3N) flat vertices."""
    beta_vec = np.asarray(getattr(beta, "beta", beta), dtype=np.float32)
    base = model.template.reshape(-1) + model.shape_basis @ beta_vec
    return frames @ Tensor(model.expr_basis.T) + Tensor(base.reshape(1, -1))


def loss_geometric(pred_mesh, gt_mesh):
    """(vertex, velocity, smoothness) losses over (T, 3N) vertex frames."""
    gt = _np(gt_mesh)
    if tuple(pred_mesh.shape) != gt.shape:
        raise ValueError(f"pred {tuple(pred_mesh.shape)} vs gt {gt.shape}")
    t = gt.shape[0]
    l_vertex = mse(pred_mesh, Tensor(gt))
    zero = Tensor(np.float32(0.0))
    if t >= 2:
        d_pred = pred_mesh[1:] - pred_mesh[:-1]
        d_gt = gt[1:] - gt[:-1]
        l_velocity = mse(d_pred, Tensor(d_gt))
    else:
        l_velocity = zero
    if t >= 3:
        accel = pred_mesh[2:] - pred_mesh[1:-1] * 2.0 + pred_mesh[:-2]
        l_smooth = (accel * accel).mean()
    else:
        l_smooth = zero
    return l_vertex, l_velocity, l_smooth


def total_loss(l_simple, l_style, l_vertex, l_velocity, l_smooth, weights):
    """Weighted sum; ``lam_mouth`` is already inside the simple term."""
    return (
        l_simple * weights.lam_simple
        + l_style * weights.lam_style
        + l_vertex * weights.lam_vertex
        + l_velocity * weights.lam_velocity
        + l_smooth * weights.lam_smooth
    )


def _np(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)
