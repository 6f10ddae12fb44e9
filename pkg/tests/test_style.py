import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facediff.morphable import ExpressionSeq
from facediff.numerics import Tensor, finite_difference_check, make_rng
from facediff.style import STD_EPS, StyleAutoencoder, StyleConfig, train_style_autoencoder


def tiny_config(k=3, h=4):
    return StyleConfig(n_expr=k, width=h, layers=1, heads=2, max_frames=128)


def seq(rng, t, k=3):
    return ExpressionSeq(rng.normal(size=(t, k)).astype(np.float32))


@pytest.mark.parametrize("t", [1, 10, 75])
def test_encode_shape(t):
    model = StyleAutoencoder(tiny_config(), seed=0)
    f = model.encode_frames(seq(make_rng(0), t))
    assert f.shape == (t, 4)


def test_encode_is_deterministic():
    model = StyleAutoencoder(tiny_config(), seed=1)
    s = seq(make_rng(1), 12)
    a = model.encode_frames(s)
    b = model.encode_frames(s)
    np.testing.assert_array_equal(a, b)


def test_encode_not_constant_under_frame_perturbation():
    model = StyleAutoencoder(tiny_config(), seed=2)
    s1 = seq(make_rng(2), 8)
    frames2 = s1.frames.copy()
    frames2[3] += 0.5
    f1 = model.encode_frames(s1)
    f2 = model.encode_frames(ExpressionSeq(frames2))
    assert np.abs(f1 - f2).max() > 1e-6


def test_pool_constant_features_have_near_zero_std_component():
    model = StyleAutoencoder(tiny_config(), seed=3)
    row = make_rng(3).normal(size=4).astype(np.float32)
    f = np.tile(row, (5, 1))
    got = model.pool_style(f).s
    p = model.params["pool.w"].data
    # std collapses to sqrt(eps); exact hand formula
    pooled = np.concatenate([row, np.full(4, np.sqrt(STD_EPS), np.float32)])
    np.testing.assert_allclose(got, pooled @ p, atol=1e-6)
    no_std = np.concatenate([row, np.zeros(4, np.float32)]) @ p
    assert np.abs(got - no_std).max() < 0.01


def test_pool_matches_hand_computation():
    model = StyleAutoencoder(tiny_config(), seed=4)
    f = make_rng(4).normal(size=(6, 4)).astype(np.float32)
    mu = f.mean(axis=0)
    std = np.sqrt(((f - mu) ** 2).mean(axis=0) + STD_EPS)
    want = np.concatenate([mu, std]) @ model.params["pool.w"].data
    np.testing.assert_allclose(model.pool_style(f).s, want, atol=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_pool_is_permutation_invariant(perm_seed):
    model = StyleAutoencoder(tiny_config(), seed=5)
    f = make_rng(5).normal(size=(9, 4)).astype(np.float32)
    perm = make_rng(perm_seed, "perm").permutation(9)
    a = model.pool_style(f).s
    b = model.pool_style(f[perm]).s
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_pool_rejects_empty():
    model = StyleAutoencoder(tiny_config(), seed=6)
    with pytest.raises(ValueError):
        model.pool_style(np.zeros((0, 4), np.float32))


def test_decode_shape_and_zero_weights():
    model = StyleAutoencoder(tiny_config(), seed=7)
    f = make_rng(7).normal(size=(5, 4)).astype(np.float32)
    s = model.pool_style(f)
    out = model.decode_sequence(f, s)
    assert out.frames.shape == (5, 3)
    for t in model.params.values():
        t.data = np.zeros_like(t.data)
    out = model.decode_graph(Tensor(f), Tensor(s.s)).data
    np.testing.assert_array_equal(out, np.zeros((5, 3), np.float32))


def test_decode_gradient_through_style_broadcast():
    model = StyleAutoencoder(tiny_config(), seed=8)
    rng = make_rng(8)
    f = Tensor(rng.normal(size=(3, 4)).astype(np.float32))
    s = Tensor(rng.normal(size=4).astype(np.float32), requires_grad=True)
    fn = lambda: (model.decode_graph(f, s) ** 2.0).mean()
    assert finite_difference_check(fn, [s], h=1e-3) < 1e-4


def test_encoder_gradients():
    model = StyleAutoencoder(tiny_config(), seed=9)
    x = Tensor(make_rng(9).normal(size=(4, 3)).astype(np.float32))
    fn = lambda: (model.pool_graph(model.encode_graph(x)) ** 2.0).sum()
    assert finite_difference_check(fn, model.encoder_parameters(), h=1e-3) < 1e-4


def test_training_reduces_reconstruction_error():
    rng = make_rng(10)
    data = [seq(rng, 20) for _ in range(4)]
    model, losses = train_style_autoencoder(
        data, tiny_config(), seed=10, steps=150, batch_size=4, window=20, learning_rate=3e-3
    )
    assert losses[-1] < 0.5 * losses[0]


def test_training_is_deterministic():
    rng = make_rng(11)
    data = [seq(rng, 16) for _ in range(3)]
    _, a = train_style_autoencoder(data, tiny_config(), seed=11, steps=20, batch_size=2, window=16)
    _, b = train_style_autoencoder(data, tiny_config(), seed=11, steps=20, batch_size=2, window=16)
    assert a == b


def test_zero_learning_rate_freezes_loss():
    data = [seq(make_rng(12), 10)]
    _, losses = train_style_autoencoder(
        data, tiny_config(), seed=12, steps=10, batch_size=2, window=10, learning_rate=0.0
    )
    assert all(v == losses[0] for v in losses)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        train_style_autoencoder([], tiny_config(), steps=1)


def test_checkpoint_round_trip(tmp_path):
    model = StyleAutoencoder(tiny_config(), seed=13)
    s = seq(make_rng(13), 6)
    path = tmp_path / "style.paf"
    model.save(path)
    back = StyleAutoencoder.load(path)
    np.testing.assert_array_equal(back.style_embedding(s).s, model.style_embedding(s).s)
