"""Personal-style autoencoder.

A temporal encoder turns an expression sequence into per-frame features;
mean and standard deviation over time are concatenated and linearly
mapped to a fixed-width style embedding, which is permutation-invariant
over frames and captures speaker-specific motion habits. A decoder
reconstructs the sequence from the features concatenated with the
embedding; the whole thing trains with plain MSE. After training, the
encoder is frozen and reused both as a conditioning input and inside the
style-preservation loss of the main model.
"""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import nn, paf
from .morphable import ExpressionSeq
from .numerics import Adam, NumericsError, Tensor, backward, concat, make_rng, mse, zero_grads

STD_EPS = 1e-5


@dataclass
class StyleEmbedding:
    """Pooled style vector, length equals the autoencoder width."""

    s: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(self.s)):
            raise ValueError("non-finite style embedding")


@dataclass
class StyleConfig:
    n_expr: int = 53
    width: int = 512
    layers: int = 2
    heads: int = 4
    max_frames: int = 4096


class StyleAutoencoder:
    """Encoder/decoder pair over T x k expression sequences."""

    def __init__(self, config, seed=0):
        self.config = config
        self.params = {}
        rng = make_rng(seed, "style-init")
        k, h = config.n_expr, config.width
        nn.init_linear(self.params, "enc.in", k, h, rng)
        for i in range(config.layers):
            nn.init_block(self.params, f"enc.block{i}", h, rng)
        nn.init_linear(self.params, "pool", 2 * h, h, rng, bias=False)
        nn.init_linear(self.params, "dec.in", 2 * h, h, rng)
        for i in range(config.layers):
            nn.init_block(self.params, f"dec.block{i}", h, rng)
        nn.init_linear(self.params, "dec.out", h, k, rng)
        self._pe = nn.sinusoidal_encoding(config.max_frames, h)

    # ---- graph-level pieces (used by training and the style loss) ----

    def encode_graph(self, x):
        """x: (T, k) tensor -> (T, h) per-frame features."""
        t = x.shape[0]
        h = nn.linear(self.params, "enc.in", x) + Tensor(self._pe[:t])
        for i in range(self.config.layers):
            h = nn.block(self.params, f"enc.block{i}", h, self.config.heads)
        return h

    def pool_graph(self, f):
        """f: (T, h) tensor -> (h,) style embedding via mean||std -> linear."""
        mu = f.mean(axis=0)
        var = ((f - mu.reshape(1, -1)) ** 2.0).mean(axis=0)
        std = (var + STD_EPS).sqrt()
        return concat([mu, std], axis=0) @ self.params["pool.w"]

    def decode_graph(self, f, s):
        """f: (T, h), s: (h,) -> (T, k) reconstruction."""
        t = f.shape[0]
        s_rows = s.reshape(1, -1) + Tensor(np.zeros((t, 1), dtype=np.float32))
        x = nn.linear(self.params, "dec.in", concat([f, s_rows], axis=1))
        x = x + Tensor(self._pe[:t])
        for i in range(self.config.layers):
            x = nn.block(self.params, f"dec.block{i}", x, self.config.heads)
        return nn.linear(self.params, "dec.out", x)

    # ---- numpy-level API ----

    def encode_frames(self, seq):
        """ExpressionSeq -> (T, h) feature matrix."""
        frames = seq.frames if isinstance(seq, ExpressionSeq) else np.asarray(seq, np.float32)
        if frames.shape[1] != self.config.n_expr:
            raise ValueError(f"k {frames.shape[1]} != configured {self.config.n_expr}")
        return self.encode_graph(Tensor(frames)).data

    def pool_style(self, f):
        f = np.asarray(f, dtype=np.float32)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError("need at least one frame of features")
        return StyleEmbedding(self.pool_graph(Tensor(f)).data)

    def style_embedding(self, seq):
        return self.pool_style(self.encode_frames(seq))

    def decode_sequence(self, f, style, fps=25):
        s = style.s if isinstance(style, StyleEmbedding) else np.asarray(style, np.float32)
        out = self.decode_graph(Tensor(np.asarray(f, np.float32)), Tensor(s))
        return ExpressionSeq(out.data, fps=fps)

    def reconstruct(self, seq):
        f = self.encode_graph(Tensor(seq.frames))
        s = self.pool_graph(f)
        return ExpressionSeq(self.decode_graph(f, s).data, fps=seq.fps)

    # ---- parameter plumbing ----

    def parameters(self):
        return list(self.params.values())

    def encoder_parameters(self):
        return [t for name, t in self.params.items() if name.startswith(("enc.", "pool."))]

    def freeze(self):
        for t in self.params.values():
            t.requires_grad = False

    def save(self, path):
        paf.write_paf(path, {name: t.data for name, t in self.params.items()})
        with open(_sidecar(path), "w") as fh:
            json.dump(asdict(self.config), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(_sidecar(path)) as fh:
            config = StyleConfig(**json.load(fh))
        model = cls(config)
        arrays = paf.read_paf(path)
        if set(arrays) != set(model.params):
            raise ValueError("checkpoint parameter names do not match architecture")
        for name, arr in arrays.items():
            model.params[name].data = arr.reshape(model.params[name].data.shape)
        return model


def _sidecar(path):
    root, _ = os.path.splitext(str(path))
    return root + ".json"


def train_style_autoencoder(
    sequences,
    config,
    seed=0,
    steps=300,
    batch_size=8,
    window=75,
    learning_rate=1e-4,
):
    """Fit the autoencoder on expression sequences by windowed MSE.

    Returns (model, per-step loss list). Deterministic per seed. A
    non-finite loss aborts with the failing step in the message.
    """
    sequences = list(sequences)
    if not sequences:
        raise ValueError("empty dataset")
    model = StyleAutoencoder(config, seed=seed)
    opt = Adam(model.parameters(), learning_rate=learning_rate)
    rng = make_rng(seed, "style-train")
    losses = []
    for step in range(steps):
        zero_grads(model.parameters())
        total = None
        for _ in range(batch_size):
            seq = sequences[rng.integers(len(sequences))]
            frames = seq.frames
            if frames.shape[0] > window:
                start = int(rng.integers(frames.shape[0] - window + 1))
                frames = frames[start : start + window]
            x = Tensor(frames)
            f = model.encode_graph(x)
            recon = model.decode_graph(f, model.pool_graph(f))
            loss = mse(recon, x)
            total = loss if total is None else total + loss
        total = total * (1.0 / batch_size)
        value = total.item()
        if not np.isfinite(value):
            raise NumericsError(f"non-finite training loss at step {step}")
        losses.append(value)
        backward(total)
        opt.step()
    return model, losses
