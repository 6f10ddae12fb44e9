import numpy as np
import pytest

from facediff.conditioning import ConditionBundle, TranscriptEmbedding
from facediff.denoiser import Denoiser, DenoiserConfig, build_alignment_mask
from facediff.morphable import IdentityShape
from facediff.numerics import Tensor, finite_difference_check, make_rng
from facediff.style import StyleEmbedding


def tiny_config(**kw):
    base = dict(
        n_expr=3,
        n_mouth=1,
        d_audio=5,
        d_text=3,
        d_shape=2,
        d_style=4,
        width=8,
        layers=1,
        heads=2,
        window=4,
        context=2,
        align_radius=1,
        n_steps=10,
    )
    base.update(kw)
    return DenoiserConfig(**base)


def tiny_inputs(cfg, seed=0):
    rng = make_rng(seed, "inputs")
    prev = rng.normal(size=(cfg.context, cfg.n_expr)).astype(np.float32)
    noisy = rng.normal(size=(cfg.window, cfg.n_expr)).astype(np.float32)
    pa = rng.normal(size=(cfg.context, cfg.d_audio)).astype(np.float32)
    ca = rng.normal(size=(cfg.window, cfg.d_audio)).astype(np.float32)
    bundle = ConditionBundle(
        beta=IdentityShape(rng.normal(size=cfg.d_shape)),
        t_hat=TranscriptEmbedding(rng.normal(size=cfg.d_text)),
        style=StyleEmbedding(rng.normal(size=cfg.d_style)),
    )
    return prev, noisy, pa, ca, bundle


def test_mask_radius_zero_is_diagonal():
    mask = build_alignment_mask(0, 5, 0)
    np.testing.assert_array_equal(mask.allowed, np.eye(5, dtype=bool))


def test_mask_large_radius_is_all_true():
    mask = build_alignment_mask(2, 3, 5)
    assert mask.allowed.all()


def test_mask_hand_enumerated_band():
    mask = build_alignment_mask(2, 3, 1)
    want = np.array(
        [
            [1, 1, 0, 0, 0],
            [1, 1, 1, 0, 0],
            [0, 1, 1, 1, 0],
            [0, 0, 1, 1, 1],
            [0, 0, 0, 1, 1],
        ],
        dtype=bool,
    )
    np.testing.assert_array_equal(mask.allowed, want)


def test_mask_rejects_empty_rows():
    from facediff.denoiser import AlignmentMask

    with pytest.raises(ValueError):
        AlignmentMask(np.zeros((3, 3), dtype=bool), radius=0)


def test_causal_mask_never_reads_future():
    mask = build_alignment_mask(0, 6, 2, causal=True)
    i, j = np.nonzero(mask.allowed)
    assert (j <= i).all()
    assert ((i - j) <= 2).all()


def test_forward_shape_and_determinism():
    cfg = tiny_config()
    model = Denoiser(cfg, seed=1)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 1)
    c = model.fuse(bundle, 3)
    a = model.forward(prev, noisy, pa, ca, c).data
    b = model.forward(prev, noisy, pa, ca, model.fuse(bundle, 3)).data
    assert a.shape == (cfg.context + cfg.window, cfg.n_expr)
    np.testing.assert_array_equal(a, b)


def test_zero_weights_give_zero_output():
    cfg = tiny_config()
    model = Denoiser(cfg, seed=2)
    for t in model.params.values():
        t.data = np.zeros_like(t.data)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 2)
    out = model.forward(prev, noisy, pa, ca, model.fuse(bundle, 0)).data
    np.testing.assert_array_equal(out, np.zeros_like(out))


def test_conditioning_reaches_output():
    cfg = tiny_config()
    model = Denoiser(cfg, seed=3)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 3)
    other = ConditionBundle(
        beta=bundle.beta,
        t_hat=TranscriptEmbedding(bundle.t_hat.t_hat + 1.0),
        style=bundle.style,
    )
    a = model.forward(prev, noisy, pa, ca, model.fuse(bundle, 5)).data
    b = model.forward(prev, noisy, pa, ca, model.fuse(other, 5)).data
    assert np.abs(a - b).max() > 1e-6


def test_cross_attention_is_audio_sensitive():
    cfg = tiny_config(align_radius=100)  # all-true mask
    model = Denoiser(cfg, seed=4)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 4)
    c = model.fuse(bundle, 2)
    a = model.forward(prev, noisy, pa, ca, c).data
    b = model.forward(prev, noisy, pa, ca[::-1].copy(), c).data
    assert np.abs(a - b).max() > 1e-6


def test_audio_influence_respects_band_with_self_attention_ablated():
    cfg = tiny_config(window=6, context=2, align_radius=1)
    model = Denoiser(cfg, seed=5)
    # zero every self-attention path so tokens only mix through cross-attention
    for name, t in model.params.items():
        if ".self." in name:
            t.data = np.zeros_like(t.data)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 5)
    c = model.fuse(bundle, 1)
    base = model.forward(prev, noisy, pa, ca, c).data
    t_total = cfg.context + cfg.window
    for j in range(cfg.window):
        ca2 = ca.copy()
        ca2[j] += 10.0
        out = model.forward(prev, noisy, pa, ca2, c).data
        changed = np.nonzero(np.abs(out - base).max(axis=1) > 1e-7)[0]
        audio_index = cfg.context + j
        assert all(abs(int(i) - audio_index) <= cfg.align_radius for i in changed)
        near = [i for i in range(t_total) if abs(i - audio_index) <= cfg.align_radius]
        assert set(near) & set(map(int, changed))


def test_drop_audio_erases_audio_influence():
    cfg = tiny_config()
    model = Denoiser(cfg, seed=6)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 6)
    c = model.fuse(bundle, 4)
    a = model.forward(prev, noisy, pa, ca, c, drop_audio=True).data
    b = model.forward(prev, noisy, pa * 3.0, ca - 7.0, c, drop_audio=True).data
    np.testing.assert_array_equal(a, b)


def test_forward_gradients_match_finite_differences():
    cfg = tiny_config(window=4, context=2, width=8, layers=1)
    model = Denoiser(cfg, seed=7)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 7)

    def f():
        out = model.forward(prev, noisy, pa, ca, model.fuse(bundle, 3))
        return (out * out).mean()

    # probing every parameter is slow; check a representative subset
    names = [
        "in_proj.w",
        "audio_proj.w",
        "cond.l1.w",
        "cond.l2.w",
        "block0.self.wq.w",
        "block0.cross.wv.w",
        "block0.ff1.b",
        "final_ln.g",
        "out_proj.w",
        "null.style",
    ]
    params = [model.params[n] for n in names]
    assert finite_difference_check(f, params, h=1e-3) < 1e-4


def test_shape_mismatch_rejected():
    cfg = tiny_config()
    model = Denoiser(cfg, seed=8)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 8)
    c = model.fuse(bundle, 1)
    with pytest.raises(ValueError):
        model.forward(prev[:, :2], noisy, pa, ca, c)
    with pytest.raises(ValueError):
        model.forward(prev, noisy, pa[:, :3], ca, c)


def test_checkpoint_round_trip(tmp_path):
    cfg = tiny_config()
    model = Denoiser(cfg, seed=9)
    path = tmp_path / "denoiser.paf"
    model.save(path)
    back = Denoiser.load(path)
    prev, noisy, pa, ca, bundle = tiny_inputs(cfg, 9)
    a = model.forward(prev, noisy, pa, ca, model.fuse(bundle, 2)).data
    b = back.forward(prev, noisy, pa, ca, back.fuse(bundle, 2)).data
    np.testing.assert_array_equal(a, b)
