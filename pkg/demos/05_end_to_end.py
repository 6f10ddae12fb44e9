"""Miniature end-to-end run: synthetic data, a short training burst,
guided sampling, metric scoring. Uses a reduced step count so it
finishes in about a minute; the acceptance suite runs the full version.

Run: python3 demos/05_end_to_end.py
"""

import tempfile

import numpy as np

from facediff.dataset import (
    SplitSpec, SyntheticSetConfig, generate_synthetic_set, load_manifest, load_sample,
    split_by_language,
)
from facediff.morphable import ExpressionSeq, load_model
from facediff.style import StyleConfig, train_style_autoencoder
from facediff.trainer import TrainConfig, evaluate_samples, init_train_state, train_denoiser

root = tempfile.mkdtemp()
cfg = SyntheticSetConfig(samples_per_pair=4, min_frames=40, max_frames=60)
manifest, model_path = generate_synthetic_set(root, seed=42, config=cfg)
records, base = load_manifest(manifest)
splits = split_by_language(records, SplitSpec(10, 0, 2), seed=0)
train = [load_sample(r, base) for r in splits["train"]]
held_out = [load_sample(r, base) for r in splits["test"]]
model = load_model(model_path)
print(f"{len(train)} training / {len(held_out)} held-out sequences")

style, _ = train_style_autoencoder(
    [ExpressionSeq(s.expressions) for s in train],
    StyleConfig(n_expr=53, width=32, layers=2, heads=4, max_frames=256),
    seed=1, steps=60, batch_size=8, window=40, learning_rate=1e-3,
)
style.freeze()
print("style encoder trained and frozen")

config = TrainConfig(window=16, context=4, batch_size=8, steps=400, width=64, layers=2,
                     heads=2, style_width=32, n_steps=50, learning_rate=3e-4, seed=0,
                     snapshot_every=0)
state = train_denoiser(train, model, style, config)
print(f"denoiser: loss {np.mean(state.losses[:20]):.2f} -> {np.mean(state.losses[-20:]):.2f} "
      f"over {state.step} steps")

untrained = init_train_state(
    config, (16, 8, 80, 53, model.n_mouth, {s.record.language for s in train})
)
for label, st in (("trained", state), ("untrained", untrained)):
    rows = evaluate_samples(st, model, style, held_out, style_pool=train, seed=3)
    lve = np.mean([r["lve"] for r in rows])
    dtw = np.mean([r["dtw"] for r in rows])
    print(f"{label:>9}: LVE {lve:.3f} mm, DTW {dtw:.5f}")
