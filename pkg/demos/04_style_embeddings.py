"""Train the style autoencoder on three synthetic speakers and watch
their embeddings separate.

Run: python3 demos/04_style_embeddings.py   (~30 s)
"""

import tempfile
from itertools import combinations

import numpy as np

from facediff.dataset import SyntheticSetConfig, generate_synthetic_set, load_manifest, load_sample
from facediff.morphable import ExpressionSeq
from facediff.style import StyleConfig, train_style_autoencoder

cfg = SyntheticSetConfig(n_languages=1, n_speakers=3, samples_per_pair=8,
                         min_frames=60, max_frames=90)
manifest, _ = generate_synthetic_set(tempfile.mkdtemp(), seed=7, config=cfg)
records, base = load_manifest(manifest)
samples = [load_sample(r, base) for r in records]
print(f"{len(samples)} sequences from 3 synthetic speakers")

seqs = [ExpressionSeq(s.expressions) for s in samples]
model, losses = train_style_autoencoder(
    seqs,
    StyleConfig(n_expr=53, width=32, layers=2, heads=4, max_frames=256),
    seed=11, steps=300, batch_size=8, window=75, learning_rate=1e-3,
)
print(f"reconstruction MSE: {losses[0]:.4f} -> {losses[-1]:.4f}")

embeddings = {}
for s, r in zip(samples, records):
    embeddings.setdefault(r.speaker, []).append(
        model.style_embedding(ExpressionSeq(s.expressions)).s
    )

intra = [np.linalg.norm(a - b) for spk in embeddings
         for a, b in combinations(embeddings[spk], 2)]
inter = [np.linalg.norm(a - b)
         for s1, s2 in combinations(sorted(embeddings), 2)
         for a in embeddings[s1] for b in embeddings[s2]]
print(f"mean intra-speaker distance: {np.mean(intra):.3f}")
print(f"mean inter-speaker distance: {np.mean(inter):.3f}")
print("speakers form clusters" if np.mean(intra) < np.mean(inter) else "no separation")
