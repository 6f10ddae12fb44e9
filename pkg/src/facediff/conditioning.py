"""Denoiser conditioning: externally produced audio features and
transcript embeddings, learned null embeddings for classifier-free
dropout, the fused per-step conditioning vector, and a synthetic
planted-signal oracle that stands in for the real feature extractors so
the engine trains and tests with no pretrained models.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn, paf
from .morphable import IdentityShape
from .numerics import Tensor, concat, make_rng, param
from .style import StyleEmbedding

FPS = 25


@dataclass
class AudioFeatureSeq:
    """T x d_a per-frame audio features, frame-aligned with the motion."""

    feats: np.ndarray
    fps: int = FPS

    def __post_init__(self):
        self.feats = np.asarray(self.feats, dtype=np.float32)
        if self.feats.ndim != 2:
            raise ValueError(f"expected T x d_a features, got {self.feats.shape}")
        if not np.all(np.isfinite(self.feats)):
            raise ValueError("non-finite audio features")

    @property
    def n_frames(self):
        return self.feats.shape[0]

    @property
    def dim(self):
        return self.feats.shape[1]


@dataclass
class TranscriptEmbedding:
    """Sentence-level embedding of the spoken transcript."""

    t_hat: np.ndarray

    def __post_init__(self):
        self.t_hat = np.asarray(self.t_hat, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(self.t_hat)):
            raise ValueError("non-finite transcript embedding")

    @property
    def dim(self):
        return self.t_hat.shape[0]


@dataclass
class ConditionBundle:
    """Everything the denoiser is conditioned on, plus dropout flags.

    When ``drop_cond`` is set the learned null embeddings replace the
    transcript and style vectors (jointly); ``drop_audio`` replaces the
    audio feature rows inside the denoiser. Identity shape is never
    dropped. The two flags are independent. The ``force_null_*`` flags
    pin one axis to its null embedding regardless of dropout, which is
    how the conditioning-removal ablations run.
    """

    beta: IdentityShape
    t_hat: TranscriptEmbedding
    style: StyleEmbedding
    drop_audio: bool = False
    drop_cond: bool = False
    force_null_text: bool = False
    force_null_style: bool = False


def init_condition_params(params, d_text, d_shape, d_style, d_audio, width, rng):
    """Register L1/L2 fusion maps and the learned null embeddings."""
    nn.init_linear(params, "cond.l1", d_text + d_shape + d_style, width, rng)
    nn.init_linear(params, "cond.l2", width, width, rng)
    params["null.audio"] = param(rng.normal(scale=0.02, size=d_audio).astype(np.float32))
    params["null.t_hat"] = param(rng.normal(scale=0.02, size=d_text).astype(np.float32))
    params["null.style"] = param(rng.normal(scale=0.02, size=d_style).astype(np.float32))


def fuse_condition(params, bundle, n, n_steps, width):
    """c = L1(t_hat ++ beta ++ style) + L2(step_embedding(n)); shape (width,)."""
    if not 0 <= n <= n_steps:
        raise ValueError(f"diffusion step {n} outside [0, {n_steps}]")
    null_text = bundle.drop_cond or bundle.force_null_text
    null_style = bundle.drop_cond or bundle.force_null_style
    t_hat = params["null.t_hat"] if null_text else Tensor(bundle.t_hat.t_hat)
    style = params["null.style"] if null_style else Tensor(bundle.style.s)
    beta = Tensor(bundle.beta.beta)
    fused = nn.linear(params, "cond.l1", concat([t_hat, beta, style], axis=0))
    step = Tensor(nn.step_encoding(n, width))
    return fused + nn.linear(params, "cond.l2", step)


# ---- synthetic planted-signal oracle --------------------------------

FREQ_GRID = np.arange(0.5, 6.01, 0.5, dtype=np.float64)  # Hz, resolvable at 25 fps


@dataclass
class SyntheticSpec:
    """Seeded generator config for stand-in audio features.

    The latent signal is a sum of ``n_waves`` sinusoids with frequencies
    drawn from ``FREQ_GRID`` restricted to ``freq_band``; features are a
    fixed seeded linear mixture of the latent, so the planted
    frequencies are recoverable from the features by least squares.
    """

    seed: int = 0
    d_audio: int = 16
    d_text: int = 8
    n_waves: int = 3
    freq_band: tuple = (0.5, 6.0)
    fps: int = FPS


def planted_latent(spec, n_frames):
    """(Z, freqs): Z is (T, n_waves) seeded sinusoids, freqs in Hz."""
    rng = make_rng(spec.seed, "latent")
    lo, hi = spec.freq_band
    choices = FREQ_GRID[(FREQ_GRID >= lo) & (FREQ_GRID <= hi)]
    if len(choices) < spec.n_waves:
        raise ValueError("frequency band too narrow for n_waves")
    freqs = np.sort(rng.choice(choices, size=spec.n_waves, replace=False))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=spec.n_waves)
    t = np.arange(n_frames, dtype=np.float64)[:, None] / spec.fps
    z = np.sin(2.0 * np.pi * freqs[None, :] * t + phases[None, :])
    return z.astype(np.float32), freqs


def synthetic_features(spec, n_frames):
    """Deterministic (AudioFeatureSeq, TranscriptEmbedding) for a spec."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    z, _ = planted_latent(spec, n_frames)
    rng = make_rng(spec.seed, "mix")
    mix = rng.normal(scale=1.0 / np.sqrt(spec.n_waves), size=(spec.n_waves, spec.d_audio))
    feats = (z @ mix).astype(np.float32)
    t_hat = make_rng(spec.seed, "t_hat").normal(size=spec.d_text).astype(np.float32)
    return AudioFeatureSeq(feats, fps=spec.fps), TranscriptEmbedding(t_hat)


def recover_planted_frequencies(feats, fps, n_waves, grid=FREQ_GRID):
    """Identify planted frequencies by joint least squares on the grid.

    Builds a sin/cos design over every grid frequency, solves for the
    mixing coefficients and returns the ``n_waves`` frequencies carrying
    the most energy, sorted ascending.
    """
    feats = np.asarray(feats, dtype=np.float64)
    t = np.arange(feats.shape[0], dtype=np.float64)[:, None] / fps
    cols = []
    for f in grid:
        cols.append(np.sin(2.0 * np.pi * f * t))
        cols.append(np.cos(2.0 * np.pi * f * t))
    design = np.concatenate(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, feats, rcond=None)
    energy = np.array(
        [np.sum(coef[2 * i : 2 * i + 2] ** 2) for i in range(len(grid))], dtype=np.float64
    )
    top = np.sort(np.argsort(energy)[-n_waves:])
    return np.asarray(grid)[top]


# ---- file loading ----------------------------------------------------


def save_features(audio_path, t_hat_path, audio, t_hat):
    paf.write_paf(
        audio_path, {"audio_feats": audio.feats, "fps": np.float32(audio.fps)}
    )
    paf.write_paf(t_hat_path, {"t_hat": t_hat.t_hat})


def load_features(audio_path, t_hat_path, expect_fps=FPS):
    """Read per-sample feature files, validating dims and frame rate."""
    audio_arrays = paf.read_paf(audio_path)
    if "audio_feats" not in audio_arrays:
        raise ValueError(f"{audio_path}: missing 'audio_feats' array")
    feats = audio_arrays["audio_feats"]
    if feats.ndim != 2:
        raise ValueError(f"{audio_path}: audio_feats must be T x d_a, got {feats.shape}")
    fps = int(audio_arrays["fps"].reshape(())) if "fps" in audio_arrays else expect_fps
    if fps != expect_fps:
        raise ValueError(f"{audio_path}: fps {fps} != expected {expect_fps}")
    t_arrays = paf.read_paf(t_hat_path)
    if "t_hat" not in t_arrays:
        raise ValueError(f"{t_hat_path}: missing 't_hat' array")
    t_hat = t_arrays["t_hat"]
    if t_hat.ndim != 1:
        raise ValueError(f"{t_hat_path}: t_hat must be 1-D, got {t_hat.shape}")
    return AudioFeatureSeq(feats, fps=fps), TranscriptEmbedding(t_hat)
