"""Forward noising, reverse ancestral sampling and two-term incremental
classifier-free guidance over expression windows.

The schedule is the squared-cosine ramp (offset 0.008, betas clipped at
0.999). The network predicts the clean window; each reverse step draws
from the posterior q(M^{n-1} | M^n, estimate) with the lower-bound
variance, and the final step emits the estimate itself with no noise.
Long sequences are generated window by window, carrying the last
context frames of motion and audio; the first window uses the learned
start features.
"""

from dataclasses import dataclass, replace

import numpy as np

from .morphable import ExpressionSeq

COSINE_OFFSET = 0.008
BETA_CLIP = 0.999


@dataclass
class DiffusionSchedule:
    """Cumulative signal coefficients; alpha_bar[0] = 1, length N + 1."""

    n_steps: int
    alpha_bar: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        ab, betas = self.alpha_bar, self.betas
        if ab.shape != (self.n_steps + 1,) or betas.shape != (self.n_steps,):
            raise ValueError("schedule array lengths inconsistent with n_steps")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be exactly 1")
        if not (np.diff(ab) < 0).all():
            raise ValueError("alpha_bar must strictly decrease")
        if ab[-1] <= 0:
            raise ValueError("alpha_bar[N] must stay positive")
        if not ((betas > 0) & (betas < 1)).all():
            raise ValueError("betas must lie in (0, 1)")


def cosine_schedule(n_steps):
    """Squared-cosine alpha_bar ramp with the standard offset and clip."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    s = COSINE_OFFSET
    n = np.arange(n_steps + 1, dtype=np.float64)
    f = np.cos((n / n_steps + s) / (1.0 + s) * np.pi / 2.0) ** 2
    raw = f / f[0]
    betas = np.clip(1.0 - raw[1:] / raw[:-1], 1e-12, BETA_CLIP)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return DiffusionSchedule(n_steps=n_steps, alpha_bar=alpha_bar, betas=betas)


def q_sample(frames, n, noise, schedule):
    """Closed-form forward process: sqrt(ab_n) x0 + sqrt(1 - ab_n) eps."""
    frames = np.asarray(frames, dtype=np.float32)
    noise = np.asarray(noise, dtype=np.float32)
    if noise.shape != frames.shape:
        raise ValueError("noise shape must match frames")
    if not 0 <= n <= schedule.n_steps:
        raise ValueError(f"step {n} outside [0, {schedule.n_steps}]")
    ab = float(schedule.alpha_bar[n])
    return frames * np.float32(np.sqrt(ab)) + noise * np.float32(np.sqrt(1.0 - ab))


def posterior_sample(schedule, x0, xn, n, rng):
    """Draw M^{n-1} from q(M^{n-1} | M^n, x0); the n=1 step returns x0."""
    if not 1 <= n <= schedule.n_steps:
        raise ValueError(f"step {n} outside [1, {schedule.n_steps}]")
    if n == 1:
        return np.asarray(x0, dtype=np.float32).copy()
    ab_n = float(schedule.alpha_bar[n])
    ab_prev = float(schedule.alpha_bar[n - 1])
    beta = float(schedule.betas[n - 1])
    coef_x0 = np.sqrt(ab_prev) * beta / (1.0 - ab_n)
    coef_xn = np.sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab_n)
    var = (1.0 - ab_prev) / (1.0 - ab_n) * beta
    mean = np.float32(coef_x0) * x0 + np.float32(coef_xn) * xn
    noise = rng.standard_normal(size=np.shape(x0)).astype(np.float32)
    return mean + np.float32(np.sqrt(var)) * noise


@dataclass
class GuidanceConfig:
    """Two-axis incremental guidance weights (audio, then text + style)."""

    w_audio: float = 1.15
    w_cond: float = 1.15

    def __post_init__(self):
        if not (np.isfinite(self.w_audio) and np.isfinite(self.w_cond)):
            raise ValueError("guidance weights must be finite")


def guided_estimate(model, prev_clean, noisy, prev_audio, cur_audio, bundle, n, guidance):
    """Clean estimate combined across the three conditioning branches.

    x = x(0,0) + w_a (x(a,0) - x(0,0)) + w_c (x(a,c) - x(a,0)), where the
    second argument drops transcript and style jointly and identity is
    always live. At w_a = w_c = 1 this telescopes to the single fully
    conditioned forward pass, which is returned directly so the identity
    holds bit-exactly.
    """
    w_a, w_c = guidance.w_audio, guidance.w_cond

    def run(drop_audio, drop_cond):
        b = replace(bundle, drop_audio=drop_audio, drop_cond=drop_cond)
        c = model.fuse(b, n)
        return model.forward(
            prev_clean, noisy, prev_audio, cur_audio, c, drop_audio=drop_audio
        ).data

    if w_a == 1.0 and w_c == 1.0:
        return run(False, False)
    x_uncond = run(True, True)
    if w_a == 0.0 and w_c == 0.0:
        return x_uncond
    x_audio = run(False, True)
    out = x_uncond + np.float32(w_a) * (x_audio - x_uncond)
    if w_c != 0.0:
        x_full = run(False, False)
        out = out + np.float32(w_c) * (x_full - x_audio)
    return out


def reverse_window(schedule, shape, estimate_fn, rng):
    """Ancestral reverse loop over one window.

    ``estimate_fn(noisy, n)`` returns the clean-window estimate for the
    current noisy window at step n. Starts from standard normal noise;
    returns the final clean estimate (no noise added at the last step).
    """
    x = rng.standard_normal(size=shape).astype(np.float32)
    x0 = None
    for n in range(schedule.n_steps, 0, -1):
        x0 = np.asarray(estimate_fn(x, n), dtype=np.float32)
        if not np.all(np.isfinite(x0)):
            raise FloatingPointError(f"non-finite estimate at diffusion step {n}")
        x = posterior_sample(schedule, x0, x, n, rng)
    return x


def sample_window(model, schedule, prev_clean, prev_audio, cur_audio, bundle, guidance, rng):
    """Generate one clean window given carried context; returns (T_w, k)."""
    n_ctx = np.shape(prev_clean)[0]
    n_win = np.shape(cur_audio)[0]

    def estimate(noisy, n):
        full = guided_estimate(
            model, prev_clean, noisy, prev_audio, cur_audio, bundle, n, guidance
        )
        return full[n_ctx:]

    return reverse_window(schedule, (n_win, model.config.n_expr), estimate, rng)


def sample_sequence(
    model, schedule, audio, beta, t_hat, style, guidance, rng,
    force_null_text=False, force_null_style=False,
):
    """Generate a full expression sequence from per-frame audio features.

    Windows of ``model.config.window`` frames are generated in order,
    each conditioned on the trailing ``context`` frames of the previous
    window's motion and audio; the first window uses the learned start
    features. A final partial window is generated against edge-padded
    audio and truncated, so the output has exactly the audio's length.
    The ``force_null_*`` flags run the conditioning-removal ablations.
    """
    from .conditioning import ConditionBundle

    cfg = model.config
    feats = audio.feats
    total = feats.shape[0]
    if total < 1:
        raise ValueError("empty audio feature sequence")
    bundle = ConditionBundle(
        beta=beta,
        t_hat=t_hat,
        style=style,
        force_null_text=force_null_text,
        force_null_style=force_null_style,
    )
    a_start, m_start = model.start_features()

    out = np.zeros((total, cfg.n_expr), dtype=np.float32)
    for pos, emitted in window_plan(total, cfg.window):
        cur = feats[pos : pos + emitted]
        if emitted < cfg.window:  # edge-pad the tail window
            pad = np.repeat(cur[-1:], cfg.window - emitted, axis=0)
            cur = np.concatenate([cur, pad], axis=0)
        if pos == 0:
            prev_clean, prev_audio = m_start.data, a_start.data
        else:
            prev_clean = out[pos - cfg.context : pos]
            prev_audio = feats[pos - cfg.context : pos]
        window = sample_window(
            model, schedule, prev_clean, prev_audio, cur, bundle, guidance, rng
        )
        out[pos : pos + emitted] = window[:emitted]
    return ExpressionSeq(out, fps=audio.fps)


def window_plan(total, window):
    """Fixed stride-``window`` partition: [(start, frames emitted)], where
    only the final entry may be shorter than a full window."""
    if total < 1:
        raise ValueError("total must be >= 1")
    return [(pos, min(window, total - pos)) for pos in range(0, total, window)]
