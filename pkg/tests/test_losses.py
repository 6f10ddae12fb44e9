import numpy as np
import pytest

from facediff.losses import (
    LossWeights,
    loss_geometric,
    loss_simple,
    loss_style,
    mesh_graph,
    total_loss,
)
from facediff.morphable import ExpressionSeq, make_synthetic_model
from facediff.numerics import Tensor, backward, finite_difference_check, make_rng
from facediff.style import StyleAutoencoder, StyleConfig


def small_model(seed=0):
    return make_synthetic_model(seed=seed, n_vertices=12, n_shape=4, n_expr=6, n_mouth=2, n_lip=4)


def test_loss_simple_zero_at_equality():
    model = small_model()
    rng = make_rng(0)
    gt = rng.normal(size=(3, 6)).astype(np.float32)
    assert loss_simple(Tensor(gt.copy()), gt, model).item() == 0.0


def test_loss_simple_single_mouth_entry_hand_arithmetic():
    model = small_model()
    t, k, b = 4, 6, 2
    lam = 10.0
    gt = np.zeros((t, k), dtype=np.float32)
    pred = gt.copy()
    delta = 0.3
    pred[1, model.mouth_param_ids[0]] += delta
    got = loss_simple(Tensor(pred), gt, model, lam_mouth=lam).item()
    want = delta**2 / (t * k) + lam * delta**2 / (t * b)
    assert got == pytest.approx(want, rel=1e-5)


def test_loss_simple_gradient():
    model = small_model(1)
    rng = make_rng(1)
    gt = rng.normal(size=(3, 6)).astype(np.float32)
    pred = Tensor(rng.normal(size=(3, 6)).astype(np.float32), requires_grad=True)
    fn = lambda: loss_simple(pred, gt, model)
    assert finite_difference_check(fn, [pred], h=1e-3) < 1e-4


def test_loss_simple_shape_mismatch():
    model = small_model()
    with pytest.raises(ValueError):
        loss_simple(Tensor(np.zeros((2, 6))), np.zeros((3, 6)), model)


def tiny_style():
    return StyleAutoencoder(StyleConfig(n_expr=6, width=4, layers=1, heads=2, max_frames=64), seed=2)


def test_loss_style_zero_when_embeddings_match():
    style = tiny_style()
    rng = make_rng(3)
    seq = rng.normal(size=(5, 6)).astype(np.float32)
    ref = style.pool_graph(style.encode_graph(Tensor(seq))).data
    assert loss_style(style, Tensor(seq.copy()), ref).item() == pytest.approx(0.0, abs=1e-10)


def test_loss_style_near_zero_for_matching_window():
    # reference pooled over the full sequence, prediction is that sequence
    style = tiny_style()
    rng = make_rng(4)
    seq = rng.normal(size=(8, 6)).astype(np.float32)
    ref = style.style_embedding(ExpressionSeq(seq)).s
    assert loss_style(style, Tensor(seq), ref).item() < 1e-8


def test_loss_style_gradient_flows_into_pred_only():
    style = tiny_style()
    style.freeze()
    rng = make_rng(5)
    pred = Tensor(rng.normal(size=(4, 6)).astype(np.float32), requires_grad=True)
    ref = rng.normal(size=4).astype(np.float32)
    backward(loss_style(style, pred, ref))
    assert pred.grad is not None and np.abs(pred.grad).max() > 0
    assert all(t.grad is None for t in style.parameters())


def test_loss_style_gradient_matches_finite_differences():
    style = tiny_style()
    style.freeze()
    rng = make_rng(6)
    pred = Tensor(rng.normal(size=(3, 6)).astype(np.float32), requires_grad=True)
    ref = rng.normal(size=4).astype(np.float32)
    fn = lambda: loss_style(style, pred, ref)
    assert finite_difference_check(fn, [pred], h=1e-3) < 1e-4


def test_geometric_losses_at_equality():
    rng = make_rng(7)
    gt = rng.normal(size=(4, 9)).astype(np.float32)
    l_v, l_vel, l_s = loss_geometric(Tensor(gt.copy()), gt)
    assert l_v.item() == 0.0
    assert l_vel.item() == 0.0
    # smoothness has no ground-truth term: it is the prediction's own
    # second-difference energy, nonzero for a generic sequence
    accel = gt[2:] - 2 * gt[1:-1] + gt[:-2]
    assert l_s.item() == pytest.approx(float((accel**2).mean()), rel=1e-5)


def test_static_prediction_has_zero_smoothness():
    rng = make_rng(8)
    row = rng.normal(size=9).astype(np.float32)
    pred = np.tile(row, (5, 1))
    gt = rng.normal(size=(5, 9)).astype(np.float32)
    _, _, l_s = loss_geometric(Tensor(pred), gt)
    assert l_s.item() == pytest.approx(0.0, abs=1e-12)


def test_geometric_losses_match_loop_oracle():
    rng = make_rng(9)
    t, n3 = 4, 15
    pred = rng.normal(size=(t, n3)).astype(np.float32)
    gt = rng.normal(size=(t, n3)).astype(np.float32)
    l_v, l_vel, l_s = loss_geometric(Tensor(pred), gt)

    v_acc = sum(
        (pred[i, j] - gt[i, j]) ** 2 for i in range(t) for j in range(n3)
    ) / (t * n3)
    vel_acc = sum(
        ((pred[i + 1, j] - pred[i, j]) - (gt[i + 1, j] - gt[i, j])) ** 2
        for i in range(t - 1)
        for j in range(n3)
    ) / ((t - 1) * n3)
    s_acc = sum(
        (pred[i + 2, j] - 2 * pred[i + 1, j] + pred[i, j]) ** 2
        for i in range(t - 2)
        for j in range(n3)
    ) / ((t - 2) * n3)
    assert l_v.item() == pytest.approx(v_acc, rel=1e-4)
    assert l_vel.item() == pytest.approx(vel_acc, rel=1e-4)
    assert l_s.item() == pytest.approx(s_acc, rel=1e-4)


def test_short_sequences_zero_out_temporal_terms():
    gt = np.ones((1, 6), np.float32)
    l_v, l_vel, l_s = loss_geometric(Tensor(gt * 2), gt)
    assert l_vel.item() == 0.0 and l_s.item() == 0.0
    gt2 = np.ones((2, 6), np.float32)
    _, l_vel2, l_s2 = loss_geometric(Tensor(gt2 * 2), gt2)
    assert l_s2.item() == 0.0 and l_vel2.item() == 0.0  # identical offsets


def test_geometric_gradient_through_mesh_synthesis():
    model = small_model(10)
    rng = make_rng(10)
    beta = rng.normal(size=4).astype(np.float32)
    gt_frames = rng.normal(size=(4, 6)).astype(np.float32)
    gt_mesh = mesh_graph(model, beta, Tensor(gt_frames)).data
    pred = Tensor(rng.normal(size=(4, 6)).astype(np.float32), requires_grad=True)

    def fn():
        l_v, l_vel, l_s = loss_geometric(mesh_graph(model, beta, pred), gt_mesh)
        return l_v + l_vel + l_s

    assert finite_difference_check(fn, [pred], h=1e-3) < 1e-4


def test_total_loss_weighted_sum():
    w = LossWeights()
    z = Tensor(np.float32(0.0))
    one = Tensor(np.float32(1.0))
    assert total_loss(z, z, one, z, z, w).item() == pytest.approx(200.0)
    w0 = LossWeights(0, 0, 0, 0, 0, 0)
    assert total_loss(one, one, one, one, one, w0).item() == 0.0


def test_total_loss_dot_product_oracle():
    rng = make_rng(11)
    parts = rng.uniform(0.1, 2.0, size=5)
    w = LossWeights(
        lam_simple=3.0, lam_mouth=0.0, lam_style=2.0, lam_vertex=5.0,
        lam_velocity=7.0, lam_smooth=11.0,
    )
    got = total_loss(*[Tensor(np.float32(p)) for p in parts], w).item()
    want = float(np.dot(parts, [3.0, 2.0, 5.0, 7.0, 11.0]))
    assert got == pytest.approx(want, rel=1e-5)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(lam_simple=-1.0)


def test_mouth_columns_get_amplified_gradient():
    model = small_model(12)
    t, k, b = 6, 6, 2
    lam = 10.0
    rng = make_rng(12)
    ratios = []
    for _ in range(30):
        gt = np.zeros((t, k), dtype=np.float32)
        pred = Tensor(rng.normal(size=(t, k)).astype(np.float32), requires_grad=True)
        backward(loss_simple(pred, gt, model, lam_mouth=lam))
        g = np.abs(pred.grad)
        mouth_cols = model.mouth_param_ids
        other_cols = [j for j in range(k) if j not in mouth_cols]
        ratios.append(g[:, mouth_cols].mean() / g[:, other_cols].mean())
    expected = 1.0 + lam * k / b
    assert np.mean(ratios) == pytest.approx(expected, rel=0.25)
