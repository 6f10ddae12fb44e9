"""Transformer decoder that predicts the clean expression window.

Input tokens are the projected previous-window clean frames concatenated
with the projected noisy current-window frames, biased by the fused
conditioning vector and a fixed sinusoidal positional encoding. Blocks
run pre-norm self-attention over motion tokens, cross-attention into the
projected audio features restricted by a banded alignment mask, and a
feed-forward layer. A final projection maps back to coefficient space;
the network predicts the clean sequence, not the noise.
"""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import nn, paf
from .conditioning import fuse_condition, init_condition_params
from .numerics import Tensor, concat, make_rng


@dataclass
class DenoiserConfig:
    n_expr: int = 53       # k, expression parameters per frame
    n_mouth: int = 13      # b, mouth parameter count (carried for tooling)
    d_audio: int = 768     # audio feature width
    d_text: int = 512      # transcript embedding width
    d_shape: int = 80      # identity shape width
    d_style: int = 512     # style embedding width
    width: int = 512       # h, decoder hidden size
    layers: int = 6
    heads: int = 8
    window: int = 75       # T_w, generated frames per window
    context: int = 10      # T_p, carried frames from the previous window
    align_radius: int = 1  # r, cross-attention band half-width
    causal_align: bool = False
    n_steps: int = 500     # diffusion steps the checkpoint was trained for


@dataclass
class AlignmentMask:
    """Boolean (T_motion, T_audio) matrix of permitted attention pairs."""

    allowed: np.ndarray
    radius: int

    def __post_init__(self):
        self.allowed = np.asarray(self.allowed, dtype=bool)
        if not self.allowed.any(axis=1).all():
            raise ValueError("alignment mask has a row with no permitted column")

    def additive(self):
        return np.where(self.allowed, np.float32(0.0), nn.NEG_INF).astype(np.float32)


def build_alignment_mask(n_context, n_window, radius, causal=False):
    """Band mask over frame indices; motion frame i may read audio frame j
    iff |i - j| <= radius (causal: -radius <= i - j, j <= i)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    t = n_context + n_window
    i = np.arange(t)[:, None]
    j = np.arange(t)[None, :]
    if causal:
        allowed = (j <= i) & (i - j <= radius)
    else:
        allowed = np.abs(i - j) <= radius
    return AlignmentMask(allowed, radius)


class Denoiser:
    def __init__(self, config, seed=0):
        self.config = config
        self.params = {}
        c = config
        rng = make_rng(seed, "denoiser-init")
        nn.init_linear(self.params, "in_proj", c.n_expr, c.width, rng)
        nn.init_linear(self.params, "audio_proj", c.d_audio, c.width, rng)
        nn.init_layer_norm(self.params, "audio_ln", c.width)
        init_condition_params(
            self.params, c.d_text, c.d_shape, c.d_style, c.d_audio, c.width, rng
        )
        for i in range(c.layers):
            nn.init_block(self.params, f"block{i}", c.width, rng, cross=True)
        nn.init_layer_norm(self.params, "final_ln", c.width)
        nn.init_linear(self.params, "out_proj", c.width, c.n_expr, rng)
        self.params["start.audio"] = nn.param(
            rng.normal(scale=0.02, size=(c.context, c.d_audio)).astype(np.float32)
        )
        self.params["start.motion"] = nn.param(
            rng.normal(scale=0.02, size=(c.context, c.n_expr)).astype(np.float32)
        )
        self._pe = nn.sinusoidal_encoding(c.context + c.window, c.width)

    def parameters(self):
        return list(self.params.values())

    def start_features(self):
        """(A_start, M_start) learnable first-window context, as tensors."""
        return self.params["start.audio"], self.params["start.motion"]

    def forward(self, prev_clean, noisy, prev_audio, cur_audio, c, drop_audio=False, mask=None):
        """Clean-sequence estimate over context + current frames.

        prev_clean: (T_p, k), noisy: (T_w, k), prev_audio: (T_p, d_a),
        cur_audio: (T_w, d_a), c: (width,) fused conditioning. Inputs may
        be numpy arrays or tensors; returns a (T_p + T_w, k) tensor.
        """
        cfg = self.config
        prev_clean = _as_tensor(prev_clean)
        noisy = _as_tensor(noisy)
        prev_audio = _as_tensor(prev_audio)
        cur_audio = _as_tensor(cur_audio)
        n_ctx, n_win = prev_clean.shape[0], noisy.shape[0]
        if prev_clean.shape[1] != cfg.n_expr or noisy.shape[1] != cfg.n_expr:
            raise ValueError("expression width mismatch")
        if prev_audio.shape != (n_ctx, cfg.d_audio) or cur_audio.shape != (n_win, cfg.d_audio):
            raise ValueError("audio feature shape mismatch")
        t = n_ctx + n_win

        audio = concat([prev_audio, cur_audio], axis=0)
        if drop_audio:
            null_row = self.params["null.audio"].reshape(1, -1)
            audio = null_row + Tensor(np.zeros((t, 1), dtype=np.float32))
        if mask is None:
            mask = build_alignment_mask(n_ctx, n_win, cfg.align_radius, cfg.causal_align)
        if mask.allowed.shape != (t, t):
            raise ValueError(f"mask shape {mask.allowed.shape} != ({t}, {t})")
        cross_mask = mask.additive()

        pe = Tensor(self._pe[:t])
        x = nn.linear(self.params, "in_proj", concat([prev_clean, noisy], axis=0))
        x = x + c.reshape(1, -1) + pe
        memory = nn.norm(self.params, "audio_ln", nn.linear(self.params, "audio_proj", audio) + pe)
        for i in range(cfg.layers):
            x = nn.block(
                self.params, f"block{i}", x, cfg.heads, memory=memory, cross_mask=cross_mask
            )
        return nn.linear(self.params, "out_proj", nn.norm(self.params, "final_ln", x))

    def fuse(self, bundle, n):
        """Conditioning vector c for a bundle at diffusion step n."""
        return fuse_condition(self.params, bundle, n, self.config.n_steps, self.config.width)

    def save(self, path):
        paf.write_paf(path, {name: t.data for name, t in self.params.items()})
        with open(_sidecar(path), "w") as fh:
            json.dump(asdict(self.config), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(_sidecar(path)) as fh:
            config = DenoiserConfig(**json.load(fh))
        model = cls(config)
        arrays = paf.read_paf(path)
        extra = set(arrays) - set(model.params)
        missing = set(model.params) - set(arrays)
        if extra or missing:
            raise ValueError(f"checkpoint mismatch: extra={sorted(extra)} missing={sorted(missing)}")
        for name, arr in arrays.items():
            model.params[name].data = arr.reshape(model.params[name].data.shape)
        return model


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))


def _sidecar(path):
    root, _ = os.path.splitext(str(path))
    return root + ".json"
