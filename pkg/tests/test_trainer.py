import numpy as np
import pytest

from facediff import trainer
from facediff.dataset import SyntheticSetConfig, generate_synthetic_set, load_manifest, load_sample
from facediff.morphable import load_model
from facediff.style import StyleAutoencoder, StyleConfig
from facediff.trainer import (
    TrainConfig,
    evaluate_samples,
    load_checkpoint,
    load_train_config,
    save_checkpoint,
    train_denoiser,
)

SET_CFG = SyntheticSetConfig(
    samples_per_pair=1,
    min_frames=20,
    max_frames=30,
    d_audio=8,
    d_text=4,
    n_expr=6,
    n_mouth=2,
    n_shape=4,
    n_vertices=20,
)


def desk_config(**kw):
    base = dict(
        window=8,
        context=2,
        batch_size=2,
        steps=5,
        width=16,
        layers=1,
        heads=2,
        style_width=8,
        n_steps=8,
        learning_rate=1e-3,
        seed=0,
        snapshot_every=0,
    )
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("toyset")
    manifest, model_path = generate_synthetic_set(root, seed=5, config=SET_CFG)
    records, base = load_manifest(manifest)
    samples = [load_sample(r, base) for r in records]
    model = load_model(model_path)
    style = StyleAutoencoder(
        StyleConfig(n_expr=6, width=8, layers=1, heads=2, max_frames=64), seed=5
    )
    style.freeze()
    return samples, model, style


def test_training_runs_and_loss_drops(data):
    samples, model, style = data
    config = desk_config(steps=60)
    state = train_denoiser(samples, model, style, config)
    assert state.step == 60
    head = np.mean(state.losses[:10])
    tail = np.mean(state.losses[-10:])
    assert tail < head


def test_zero_learning_rate_freezes_parameters(data):
    samples, model, style = data
    config = desk_config(learning_rate=0.0, steps=3)
    state = train_denoiser(samples, model, style, config)
    fresh = trainer.init_train_state(
        config,
        (8, 4, 4, 6, model.n_mouth, {s.record.language for s in samples}),
    )
    for name, t in state.denoiser.params.items():
        np.testing.assert_array_equal(t.data, fresh.denoiser.params[name].data)


def test_training_is_deterministic(data):
    samples, model, style = data
    a = train_denoiser(samples, model, style, desk_config(steps=4))
    b = train_denoiser(samples, model, style, desk_config(steps=4))
    assert a.losses == b.losses


def test_frozen_style_untouched_and_all_params_move(data):
    samples, model, style = data
    style_before = {i: t.data.copy() for i, t in enumerate(style.parameters())}
    config = desk_config(steps=12, drop_audio_p=0.5, drop_cond_p=0.5)
    state = train_denoiser(samples, model, style, config)
    for i, t in enumerate(style.parameters()):
        np.testing.assert_array_equal(t.data, style_before[i])
    fresh = trainer.init_train_state(
        config, (8, 4, 4, 6, model.n_mouth, {s.record.language for s in samples})
    )
    unchanged = [
        name
        for name, t in state.denoiser.params.items()
        if np.array_equal(t.data, fresh.denoiser.params[name].data)
    ]
    assert unchanged == []


def test_no_dropout_leaves_null_embeddings_unused(data):
    samples, model, style = data
    config = desk_config(steps=2, drop_audio_p=0.0, drop_cond_p=0.0)
    state = train_denoiser(samples, model, style, config)
    fresh = trainer.init_train_state(
        config, (8, 4, 4, 6, model.n_mouth, {s.record.language for s in samples})
    )
    for name in ("null.audio", "null.t_hat", "null.style"):
        np.testing.assert_array_equal(
            state.denoiser.params[name].data, fresh.denoiser.params[name].data
        )


def test_ablation_variants_complete(data):
    samples, model, style = data
    for flags in (
        {"no_style_S": True},
        {"no_text_t": True},
        {"no_style_loss": True},
        {"lookup_table_language": True},
    ):
        state = train_denoiser(samples, model, style, desk_config(steps=2, **flags))
        assert state.step == 2
        if flags.get("lookup_table_language"):
            assert state.denoiser.params["lang_table"].data.shape == (3, 4)


def test_conflicting_ablations_rejected():
    with pytest.raises(ValueError):
        desk_config(no_text_t=True, lookup_table_language=True)


def test_checkpoint_round_trip(data, tmp_path):
    samples, model, style = data
    state = train_denoiser(samples, model, style, desk_config(steps=3))
    path = tmp_path / "ckpt.paf"
    save_checkpoint(state, path)
    back = load_checkpoint(path)
    assert back.step == state.step
    for name, t in state.denoiser.params.items():
        np.testing.assert_array_equal(t.data, back.denoiser.params[name].data)
    for a, b in zip(state.optimizer.m, back.optimizer.m):
        np.testing.assert_array_equal(a, b)


def test_resume_matches_continuous_run(data, tmp_path):
    samples, model, style = data
    continuous = train_denoiser(samples, model, style, desk_config(steps=14))

    half = train_denoiser(samples, model, style, desk_config(steps=7))
    path = tmp_path / "half.paf"
    save_checkpoint(half, path)
    resumed = train_denoiser(samples, model, style, desk_config(), state=load_checkpoint(path), steps=14)

    assert resumed.step == continuous.step == 14
    np.testing.assert_allclose(
        resumed.losses[-7:], continuous.losses[-7:], rtol=1e-5, atol=1e-6
    )
    for name, t in continuous.denoiser.params.items():
        np.testing.assert_allclose(
            t.data, resumed.denoiser.params[name].data, rtol=1e-5, atol=1e-6
        )


def test_checkpoint_config_mismatch_warns(data, tmp_path):
    samples, model, style = data
    state = train_denoiser(samples, model, style, desk_config(steps=1))
    path = tmp_path / "c.paf"
    save_checkpoint(state, path)
    with pytest.warns(UserWarning, match="config differs"):
        load_checkpoint(path, expect_config=desk_config(steps=99))


def test_checkpoint_version_mismatch_rejected(data, tmp_path):
    import json

    samples, model, style = data
    state = train_denoiser(samples, model, style, desk_config(steps=1))
    path = tmp_path / "v.paf"
    save_checkpoint(state, path)
    sidecar = tmp_path / "v.json"
    meta = json.loads(sidecar.read_text())
    meta["version"] = 99
    sidecar.write_text(json.dumps(meta))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)


def test_nan_loss_aborts_with_step(data):
    samples, model, style = data
    config = desk_config(steps=6, learning_rate=1e20, grad_clip=1e30)
    with pytest.raises(Exception, match="step"):
        train_denoiser(samples, model, style, config)


def test_evaluate_samples_produces_metrics(data):
    samples, model, style = data
    state = train_denoiser(samples, model, style, desk_config(steps=2))
    results = evaluate_samples(
        state, model, style, samples[:2], style_pool=samples, seed=1
    )
    assert len(results) == 2
    for row in results:
        for key in ("lve", "mve", "dtw", "mod"):
            assert np.isfinite(row[key]) and row[key] >= 0


def test_config_file_round_trip(tmp_path):
    import json

    path = tmp_path / "config.json"
    path.write_text(
        json.dumps(
            {
                "window": 8,
                "context": 2,
                "batch_size": 2,
                "width": 16,
                "layers": 1,
                "heads": 2,
                "loss_weights": {"lam_style": 0.5},
            }
        )
    )
    config = load_train_config(path, overrides={"seed": 3})
    assert config.window == 8
    assert config.seed == 3
    assert config.loss_weights.lam_style == 0.5
    assert config.loss_weights.lam_vertex == 200.0
    path.write_text(json.dumps({"nonsense": 1}))
    with pytest.raises(ValueError, match="unknown config keys"):
        load_train_config(path)
