"""Training loops, checkpointing and ablation switches.

Each optimizer step draws a batch of training windows, noises the
current window at a uniformly sampled diffusion step, applies the
condition dropout used by classifier-free guidance, runs the denoiser
and assembles the full objective. The style encoder stays frozen
throughout; its pooled embedding of the ground-truth sequence is both
the conditioning input and the style-loss target.
"""

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .conditioning import ConditionBundle, TranscriptEmbedding
from .dataset import window_starts
from .denoiser import Denoiser, DenoiserConfig
from .diffusion import GuidanceConfig, cosine_schedule, q_sample, sample_sequence
from .losses import LossWeights, loss_geometric, loss_simple, loss_style, mesh_graph, total_loss
from .metrics import evaluate_sequences
from .morphable import ExpressionSeq, IdentityShape
from .numerics import (
    Adam,
    NumericsError,
    Tensor,
    backward,
    clip_global_norm,
    make_rng,
    param,
    restore_rng,
    rng_state,
    zero_grads,
)
from .paf import read_paf, write_paf
from .style import StyleEmbedding

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    # window scheme
    window: int = 75
    context: int = 10
    batch_size: int = 128
    epochs: int = 1000
    steps: int = None          # explicit step count; overrides epochs when set
    # model
    width: int = 512
    layers: int = 6
    heads: int = 8
    align_radius: int = 1
    causal_align: bool = False
    style_width: int = 512
    # diffusion
    n_steps: int = 500
    # optimization
    learning_rate: float = 1e-4
    grad_clip: float = 1.0
    drop_audio_p: float = 0.1
    drop_cond_p: float = 0.1
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    snapshot_every: int = 50
    # ablations
    no_style_S: bool = False
    no_text_t: bool = False
    no_style_loss: bool = False
    lookup_table_language: bool = False

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)
        if not (self.window > self.context >= 0):
            raise ValueError("need window > context >= 0")
        for name in ("window", "batch_size", "width", "layers", "heads", "n_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.no_text_t and self.lookup_table_language:
            raise ValueError("no_text_t conflicts with lookup_table_language")


def load_train_config(path, overrides=None):
    with open(path) as fh:
        raw = json.load(fh)
    raw.update(overrides or {})
    known = set(TrainConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**raw)


@dataclass
class TrainState:
    """A trainable model plus everything needed to resume exactly."""

    denoiser: Denoiser
    config: TrainConfig
    optimizer: Adam
    rng: object
    step: int = 0
    losses: list = field(default_factory=list)
    languages: list = field(default_factory=list)  # lookup-table key order


def init_train_state(config, sample_meta, seed=None):
    """Build a fresh model sized for the data.

    ``sample_meta`` is (d_audio, d_text, d_shape, n_expr, n_mouth,
    languages).
    """
    d_audio, d_text, d_shape, n_expr, n_mouth, languages = sample_meta
    seed = config.seed if seed is None else seed
    dcfg = DenoiserConfig(
        n_expr=n_expr,
        n_mouth=n_mouth,
        d_audio=d_audio,
        d_text=d_text,
        d_shape=d_shape,
        d_style=config.style_width,
        width=config.width,
        layers=config.layers,
        heads=config.heads,
        window=config.window,
        context=config.context,
        align_radius=config.align_radius,
        causal_align=config.causal_align,
        n_steps=config.n_steps,
    )
    denoiser = Denoiser(dcfg, seed=seed)
    languages = sorted(languages)
    if config.lookup_table_language:
        table_rng = make_rng(seed, "lang-table")
        denoiser.params["lang_table"] = param(
            table_rng.normal(scale=0.02, size=(len(languages), d_text)).astype(np.float32)
        )
    optimizer = Adam(denoiser.parameters(), learning_rate=config.learning_rate)
    return TrainState(
        denoiser=denoiser,
        config=config,
        optimizer=optimizer,
        rng=make_rng(seed, "train"),
        languages=languages,
    )


def style_reference_embeddings(style_model, samples):
    """Pooled embedding of each full ground-truth sequence (frozen encoder)."""
    return [
        style_model.style_embedding(ExpressionSeq(s.expressions, fps=s.record.fps)).s
        for s in samples
    ]


def train_denoiser(samples, morph_model, style_model, config, state=None, steps=None):
    """Main training loop; returns the (possibly resumed) TrainState.

    ``samples`` are LoadedSamples; ``style_model`` must be frozen (it is
    required unless both style conditioning and the style loss are
    switched off). A non-finite loss aborts with a NumericsError naming
    the step; the state keeps the last snapshot taken every
    ``config.snapshot_every`` steps.
    """
    if not samples:
        raise ValueError("empty dataset")
    needs_style = not (config.no_style_S and config.no_style_loss)
    if needs_style and style_model is None:
        raise ValueError("style model required unless no_style_S and no_style_loss")
    if style_model is not None:
        style_model.freeze()

    languages = {s.record.language for s in samples}
    if state is None:
        first = samples[0]
        meta = (
            first.audio.shape[1],
            first.t_hat.shape[0],
            first.beta.shape[0],
            first.expressions.shape[1],
            morph_model.n_mouth,
            languages,
        )
        state = init_train_state(config, meta)
    denoiser = state.denoiser
    schedule = cosine_schedule(config.n_steps)
    weights = config.loss_weights
    if config.no_style_loss:
        weights = replace(weights, lam_style=0.0)
    style_refs = (
        style_reference_embeddings(style_model, samples)
        if style_model is not None
        else [np.zeros(config.style_width, dtype=np.float32) for _ in samples]
    )
    lang_index = {lang: i for i, lang in enumerate(state.languages)}

    slots = []
    for idx, s in enumerate(samples):
        for start in window_starts(s.expressions.shape[0], config.window):
            slots.append((idx, start))

    total_steps = steps
    if total_steps is None:
        total_steps = config.steps
    if total_steps is None:
        steps_per_epoch = max(1, (len(slots) + config.batch_size - 1) // config.batch_size)
        total_steps = config.epochs * steps_per_epoch

    rng = state.rng
    snapshot = None
    params = denoiser.parameters()
    while state.step < total_steps:
        zero_grads(params)
        batch_total = None
        for _ in range(config.batch_size):
            idx, start = slots[int(rng.integers(len(slots)))]
            sample = samples[idx]
            n_frames = sample.expressions.shape[0]
            if n_frames > config.window and rng.random() < 0.25:
                start = int(rng.integers(1, n_frames - config.window + 1))
            item_loss = _window_loss(
                denoiser, schedule, morph_model, style_model, config, weights,
                sample, style_refs[idx], lang_index, start, rng,
            )
            batch_total = item_loss if batch_total is None else batch_total + item_loss
        batch_total = batch_total * (1.0 / config.batch_size)
        value = batch_total.item()
        if not np.isfinite(value):
            raise NumericsError(
                f"non-finite loss at step {state.step}"
                + (f"; last good snapshot at step {snapshot[0]}" if snapshot else "")
            )
        backward(batch_total)
        clip_global_norm(params, config.grad_clip)
        state.optimizer.step()
        state.losses.append(value)
        state.step += 1
        if config.snapshot_every and state.step % config.snapshot_every == 0:
            snapshot = (state.step, {k: t.data.copy() for k, t in denoiser.params.items()})
    return state


def _window_loss(
    denoiser, schedule, morph_model, style_model, config, weights,
    sample, style_ref, lang_index, start, rng,
):
    window, context = config.window, config.context
    expr, audio = sample.expressions, sample.audio
    end = start + window
    expr_win, audio_win = expr[start:end], audio[start:end]
    if expr_win.shape[0] < window:  # short sequence: edge-pad
        reps = window - expr_win.shape[0]
        expr_win = np.concatenate([expr_win, np.repeat(expr_win[-1:], reps, axis=0)])
        audio_win = np.concatenate([audio_win, np.repeat(audio_win[-1:], reps, axis=0)])

    n = int(rng.integers(1, config.n_steps + 1))
    eps = rng.standard_normal(size=expr_win.shape).astype(np.float32)
    noisy = q_sample(expr_win, n, eps, schedule)

    drop_audio = bool(rng.random() < config.drop_audio_p)
    drop_cond = bool(rng.random() < config.drop_cond_p)

    if config.lookup_table_language:
        from .numerics import take

        row = lang_index[sample.record.language]
        t_hat_vec = take(denoiser.params["lang_table"], [row], axis=0).reshape(-1)
        t_hat = TranscriptEmbedding(t_hat_vec.data)
        live_t_hat = t_hat_vec  # tensor path keeps the table trainable
    else:
        t_hat = TranscriptEmbedding(sample.t_hat)
        live_t_hat = None

    bundle = ConditionBundle(
        beta=IdentityShape(sample.beta),
        t_hat=t_hat,
        style=StyleEmbedding(style_ref),
        drop_audio=drop_audio,
        drop_cond=drop_cond,
        force_null_text=config.no_text_t,
        force_null_style=config.no_style_S,
    )
    c = _fuse(denoiser, bundle, n, live_t_hat)

    use_start = start == 0
    if use_start:
        a_start, m_start = denoiser.start_features()
        prev_clean, prev_audio = m_start, a_start
    else:
        lo = max(0, start - context)
        prev_clean = expr[lo:start]
        prev_audio = audio[lo:start]
        if prev_clean.shape[0] < context:
            reps = context - prev_clean.shape[0]
            prev_clean = np.concatenate([np.repeat(expr[:1], reps, axis=0), prev_clean])
            prev_audio = np.concatenate([np.repeat(audio[:1], reps, axis=0), prev_audio])

    pred = denoiser.forward(prev_clean, noisy, prev_audio, audio_win, c, drop_audio=drop_audio)

    if use_start:
        # no ground truth exists for the learned start context rows
        pred_slice = pred[context:]
        gt_slice = expr_win
    else:
        pred_slice = pred
        gt_slice = np.concatenate([_np32(prev_clean), expr_win], axis=0)

    l_simple = loss_simple(pred_slice, gt_slice, morph_model, lam_mouth=weights.lam_mouth)
    if weights.lam_style > 0 and style_model is not None:
        l_style = loss_style(style_model, pred_slice, style_ref)
    else:
        l_style = Tensor(np.float32(0.0))
    pred_mesh = mesh_graph(morph_model, sample.beta, pred_slice)
    gt_mesh = mesh_graph(morph_model, sample.beta, Tensor(gt_slice)).data
    l_vertex, l_velocity, l_smooth = loss_geometric(pred_mesh, gt_mesh)
    return total_loss(l_simple, l_style, l_vertex, l_velocity, l_smooth, weights)


def _fuse(denoiser, bundle, n, live_t_hat):
    """fuse_condition, but with a tensor-valued transcript when the
    lookup-table ablation must backprop into the table."""
    if live_t_hat is None or bundle.drop_cond or bundle.force_null_text:
        return denoiser.fuse(bundle, n)
    from . import nn
    from .numerics import concat

    params = denoiser.params
    style = (
        params["null.style"]
        if (bundle.drop_cond or bundle.force_null_style)
        else Tensor(bundle.style.s)
    )
    fused = nn.linear(
        params, "cond.l1", concat([live_t_hat, Tensor(bundle.beta.beta), style], axis=0)
    )
    step = Tensor(nn.step_encoding(n, denoiser.config.width))
    return fused + nn.linear(params, "cond.l2", step)


def _np32(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)


# ---- checkpointing ----------------------------------------------------


def save_checkpoint(state, path):
    arrays = {name: t.data for name, t in state.denoiser.params.items()}
    arrays.update(state.optimizer.state_arrays())
    write_paf(path, arrays)
    meta = {
        "version": CHECKPOINT_VERSION,
        "step": state.step,
        "adam_t": state.optimizer.t,
        "train_config": _config_dict(state.config),
        "denoiser_config": asdict(state.denoiser.config),
        "rng": rng_state(state.rng),
        "languages": state.languages,
        "losses_tail": state.losses[-50:],
    }
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=1)


def load_checkpoint(path, expect_config=None):
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}")
    config = TrainConfig(**meta["train_config"])
    if expect_config is not None and _config_dict(expect_config) != _config_dict(config):
        import warnings

        warnings.warn("checkpoint config differs from the supplied config; using checkpoint's")
    dcfg = DenoiserConfig(**meta["denoiser_config"])
    denoiser = Denoiser(dcfg)
    if config.lookup_table_language:
        denoiser.params["lang_table"] = param(
            np.zeros((len(meta["languages"]), dcfg.d_text), dtype=np.float32)
        )
    arrays = read_paf(path)
    for name, t in denoiser.params.items():
        if name not in arrays:
            raise ValueError(f"checkpoint missing array {name!r}")
        t.data = arrays[name].reshape(t.data.shape)
    optimizer = Adam(denoiser.parameters(), learning_rate=config.learning_rate)
    optimizer.load_state_arrays(arrays, meta["adam_t"])
    state = TrainState(
        denoiser=denoiser,
        config=config,
        optimizer=optimizer,
        rng=restore_rng(meta["rng"]),
        step=meta["step"],
        losses=list(meta.get("losses_tail", [])),
        languages=list(meta["languages"]),
    )
    return state


def _config_dict(config):
    d = asdict(config)
    d["loss_weights"] = asdict(config.loss_weights) if not isinstance(
        config.loss_weights, dict
    ) else config.loss_weights
    return d


def _sidecar(path):
    root, _ = os.path.splitext(str(path))
    return root + ".json"


def write_loss_log(losses, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for i, v in enumerate(losses):
            writer.writerow([i, f"{v:.8f}"])


# ---- evaluation helpers ----------------------------------------------


def evaluate_samples(
    state, morph_model, style_model, samples, style_pool=None, guidance=None, seed=0,
    return_predictions=False,
):
    """Sample each held-out item and score it against its ground truth.

    Style comes from a same-speaker reference in ``style_pool`` when one
    exists (never the sample itself unless nothing else is available).
    Returns a list of per-sample metric dicts, plus the predicted
    sequences when ``return_predictions`` is set.
    """
    config = state.config
    guidance = guidance or GuidanceConfig()
    schedule = cosine_schedule(config.n_steps)
    by_speaker = {}
    for s in style_pool or []:
        by_speaker.setdefault(s.record.speaker, []).append(s)

    results, predictions = [], []
    for i, sample in enumerate(samples):
        if config.no_style_S or style_model is None:
            style = StyleEmbedding(np.zeros(config.style_width, dtype=np.float32))
        else:
            pool = [
                s for s in by_speaker.get(sample.record.speaker, [])
                if s.record.id != sample.record.id
            ]
            ref = pool[i % len(pool)] if pool else sample
            style = style_model.style_embedding(
                ExpressionSeq(ref.expressions, fps=ref.record.fps)
            )
        if config.lookup_table_language:
            row = state.languages.index(sample.record.language)
            t_hat = TranscriptEmbedding(state.denoiser.params["lang_table"].data[row])
        else:
            t_hat = TranscriptEmbedding(sample.t_hat)
        from .conditioning import AudioFeatureSeq

        pred = sample_sequence(
            state.denoiser,
            schedule,
            AudioFeatureSeq(sample.audio, fps=sample.record.fps),
            IdentityShape(sample.beta),
            t_hat,
            style,
            guidance,
            make_rng(seed, "eval", sample.record.id),
            force_null_text=config.no_text_t,
            force_null_style=config.no_style_S,
        )
        gt = ExpressionSeq(sample.expressions, fps=sample.record.fps)
        scores = evaluate_sequences(morph_model, IdentityShape(sample.beta), pred, gt)
        scores["id"] = sample.record.id
        scores["language"] = sample.record.language
        results.append(scores)
        predictions.append(pred)
    if return_predictions:
        return results, predictions
    return results
