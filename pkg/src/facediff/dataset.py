"""Data curation and iteration.

A dataset is a JSON manifest (an array of sample records, paths relative
to the manifest) plus per-sample PAF files holding expressions, audio
features, transcript embedding and identity shape. Records carry
precomputed audio-quality (PESQ) and landmark-reprojection (RLE) scores
used by the keep/reject filter; computing those scores is out of scope
here. A seeded synthetic generator builds a complete miniature dataset
from planted sinusoid signals so everything downstream can train and be
tested hermetically.
"""

import json
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import morphable, paf
from .conditioning import SyntheticSpec, planted_latent, synthetic_features
from .numerics import make_rng

PESQ_MIN = 2.0   # keep iff pesq >= this
RLE_MAX = 5.0    # keep iff rle <= this (pixels)


@dataclass
class SampleRecord:
    id: str
    language: str
    speaker: str
    n_frames: int
    expressions: str
    audio_feats: str
    t_hat: str
    beta: str
    fps: int = 25
    pesq: float = None
    rle: float = None

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def save_manifest(records, path):
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in records], fh, indent=1)


def load_manifest(path):
    """Returns (records, base_dir); record paths stay relative to base_dir."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("manifest must be a JSON array of records")
    return [SampleRecord.from_dict(d) for d in raw], os.path.dirname(os.path.abspath(path))


def filter_manifest(records):
    """Quality filter: keep iff pesq >= 2 and rle <= 5 (boundaries keep).

    Returns (kept, rejected) where rejected pairs each record with the
    first failed criterion: "missing-score", "pesq" or "rle".
    """
    kept, rejected = [], []
    for r in records:
        if r.pesq is None or r.rle is None:
            rejected.append((r, "missing-score"))
        elif r.pesq < PESQ_MIN:
            rejected.append((r, "pesq"))
        elif r.rle > RLE_MAX:
            rejected.append((r, "rle"))
        else:
            kept.append(r)
    return kept, rejected


@dataclass
class SplitSpec:
    train: int = 450
    val: int = 50
    test: int = 50

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0:
            raise ValueError("split counts must be >= 0")

    @property
    def total(self):
        return self.train + self.val + self.test


def split_by_language(records, spec, seed, speaker_disjoint=False):
    """Deterministic per-language split into train/val/test.

    Languages short of spec.total are downscaled proportionally with a
    warning. Splits never overlap; when a language has exactly
    spec.total records the union covers all of them.
    """
    if not records:
        raise ValueError("no records to split")
    by_language = {}
    for r in records:
        by_language.setdefault(r.language, []).append(r)
    splits = {"train": [], "val": [], "test": []}
    for language in sorted(by_language):
        group = sorted(by_language[language], key=lambda r: r.id)
        rng = make_rng(seed, "split", language)
        counts = (spec.train, spec.val, spec.test)
        if len(group) < spec.total:
            factor = len(group) / spec.total
            counts = tuple(int(c * factor) for c in counts)
            warnings.warn(
                f"language {language!r}: {len(group)} records < {spec.total}, "
                f"downscaled split to {counts}"
            )
        if speaker_disjoint:
            chunks = _speaker_disjoint_order(group, rng)
        else:
            order = rng.permutation(len(group))
            chunks = [group[i] for i in order]
        n_train, n_val, n_test = counts
        splits["train"] += chunks[:n_train]
        splits["val"] += chunks[n_train : n_train + n_val]
        splits["test"] += chunks[n_train + n_val : n_train + n_val + n_test]
    return splits


def _speaker_disjoint_order(group, rng):
    """Order records so same-speaker records are contiguous; split cuts
    then land between speakers whenever counts line up with group sizes."""
    by_speaker = {}
    for r in group:
        by_speaker.setdefault(r.speaker, []).append(r)
    speakers = sorted(by_speaker)
    order = rng.permutation(len(speakers))
    out = []
    for i in order:
        out.extend(sorted(by_speaker[speakers[i]], key=lambda r: r.id))
    return out


# ---- sample loading ---------------------------------------------------


@dataclass
class LoadedSample:
    record: SampleRecord
    expressions: np.ndarray   # T x k
    audio: np.ndarray         # T x d_a
    t_hat: np.ndarray         # d_t
    beta: np.ndarray          # p


def load_sample(record, base_dir):
    def arr(rel, name):
        data = paf.read_paf(os.path.join(base_dir, rel))
        if name not in data:
            raise ValueError(f"{rel}: missing array {name!r}")
        return data[name]

    expr = arr(record.expressions, "expressions")
    audio = arr(record.audio_feats, "audio_feats")
    if expr.shape[0] != record.n_frames or audio.shape[0] != record.n_frames:
        raise ValueError(
            f"{record.id}: frame counts differ (manifest {record.n_frames}, "
            f"expressions {expr.shape[0]}, audio {audio.shape[0]})"
        )
    return LoadedSample(
        record=record,
        expressions=expr,
        audio=audio,
        t_hat=arr(record.t_hat, "t_hat"),
        beta=arr(record.beta, "beta"),
    )


# ---- window iteration -------------------------------------------------


@dataclass
class TrainingWindow:
    sample_index: int
    start: int
    use_start_features: bool   # first window: learned start context applies
    padded: bool               # sequence shorter than the window, edge-padded
    expr_window: np.ndarray    # T_w x k
    audio_window: np.ndarray   # T_w x d_a
    expr_context: np.ndarray   # T_p x k (zeros when use_start_features)
    audio_context: np.ndarray  # T_p x d_a (zeros when use_start_features)


def window_starts(n_frames, window, stride=None):
    """Deterministic window grid: multiples of ``stride`` (default: the
    window length), plus a clamped final start so the tail is covered."""
    stride = window if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if n_frames <= window:
        return [0]
    starts = list(range(0, n_frames - window + 1, stride))
    if starts[-1] != n_frames - window:
        starts.append(n_frames - window)
    return starts


def _cut_window(sample, start, window, context):
    expr, audio = sample.expressions, sample.audio
    n = expr.shape[0]
    end = start + window
    ew, aw = expr[start:end], audio[start:end]
    padded = ew.shape[0] < window
    if padded:
        reps = window - ew.shape[0]
        ew = np.concatenate([ew, np.repeat(ew[-1:], reps, axis=0)])
        aw = np.concatenate([aw, np.repeat(aw[-1:], reps, axis=0)])
    use_start = start == 0
    if use_start:
        ec = np.zeros((context, expr.shape[1]), dtype=np.float32)
        ac = np.zeros((context, audio.shape[1]), dtype=np.float32)
    else:
        lo = start - context
        if lo < 0:  # context reaches past the head: repeat frame 0
            pad = -lo
            ec = np.concatenate([np.repeat(expr[:1], pad, axis=0), expr[:start]])
            ac = np.concatenate([np.repeat(audio[:1], pad, axis=0), audio[:start]])
        else:
            ec, ac = expr[lo:start], audio[lo:start]
    return ew, aw, ec, ac, use_start, padded


def window_batches(samples, window, context, batch_size, rng, stride=None, extra_random=1):
    """One epoch of shuffled training windows, in batches.

    Every sample contributes its deterministic window grid (covering all
    frames) plus ``extra_random`` uniformly drawn offsets for coverage
    diversity; the combined pool is shuffled and chunked.
    """
    if not window > context >= 0:
        raise ValueError("need window > context >= 0")
    slots = []
    for idx, sample in enumerate(samples):
        n = sample.expressions.shape[0]
        for start in window_starts(n, window, stride):
            slots.append((idx, start))
        for _ in range(extra_random):
            if n > window:
                slots.append((idx, int(rng.integers(1, n - window + 1))))
    order = rng.permutation(len(slots))
    batch = []
    for slot_i in order:
        idx, start = slots[slot_i]
        sample = samples[idx]
        ew, aw, ec, ac, use_start, padded = _cut_window(sample, start, window, context)
        batch.append(
            TrainingWindow(
                sample_index=idx,
                start=start,
                use_start_features=use_start,
                padded=padded,
                expr_window=ew,
                audio_window=aw,
                expr_context=ec,
                audio_context=ac,
            )
        )
        if len(batch) == batch_size:
            yield batch
            batch = []
    if batch:
        yield batch


# ---- synthetic dataset ------------------------------------------------

SPEAKER_BANDS = [(0.5, 2.0), (2.5, 4.0), (4.5, 6.0)]


@dataclass
class SyntheticSetConfig:
    n_languages: int = 3
    n_speakers: int = 3
    samples_per_pair: int = 2
    min_frames: int = 40
    max_frames: int = 80
    d_audio: int = 16
    d_text: int = 8
    n_expr: int = 53
    n_mouth: int = 13
    n_shape: int = 80
    n_vertices: int = 200
    include_rejects: int = 0   # extra below-threshold records for filter tests
    expr_scale: float = 0.35


def generate_synthetic_set(out_dir, seed, config=None):
    """Write a toy dataset: morphable model, manifest and per-sample PAFs.

    Expressions are a fixed nonlinear function of the planted audio
    latent, modulated by a per-speaker amplitude motif and a
    per-language offset, so audio, style and language conditioning all
    carry usable signal. Returns (manifest_path, model_path).
    """
    cfg = config or SyntheticSetConfig()
    if cfg.n_speakers > len(SPEAKER_BANDS):
        raise ValueError(f"at most {len(SPEAKER_BANDS)} speakers supported")
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)

    model = morphable.make_synthetic_model(
        seed=seed,
        n_vertices=cfg.n_vertices,
        n_shape=cfg.n_shape,
        n_expr=cfg.n_expr,
        n_mouth=cfg.n_mouth,
        n_lip=min(20, cfg.n_vertices),
    )
    model_path = out / "model.paf"
    morphable.save_model(model, model_path)

    rng = make_rng(seed, "synthset")
    n_waves = 3
    mix1 = rng.normal(scale=0.8, size=(n_waves, cfg.n_expr)).astype(np.float32)
    mix2 = rng.normal(scale=0.4, size=(n_waves, cfg.n_expr)).astype(np.float32)
    lang_base = rng.normal(size=(cfg.n_languages, cfg.d_text)).astype(np.float32)
    lang_offset = rng.normal(scale=0.15, size=(cfg.n_languages, cfg.n_expr)).astype(np.float32)
    # speakers differ by an overall energy scale plus a per-coefficient motif
    spk_scale = np.linspace(0.6, 1.8, cfg.n_speakers, dtype=np.float32)[:, None]
    spk_amp = spk_scale * rng.uniform(0.6, 1.4, size=(cfg.n_speakers, cfg.n_expr)).astype(
        np.float32
    )
    spk_beta = rng.normal(scale=0.5, size=(cfg.n_speakers, cfg.n_shape)).astype(np.float32)

    records = []
    counter = 0
    for lang_i in range(cfg.n_languages):
        for spk_i in range(cfg.n_speakers):
            for rep in range(cfg.samples_per_pair):
                records.append(
                    _write_sample(
                        out, cfg, seed, counter, lang_i, spk_i,
                        mix1, mix2, lang_base, lang_offset, spk_amp, spk_beta,
                        rng, reject=None,
                    )
                )
                counter += 1
    reject_modes = ["pesq", "rle"]
    for i in range(cfg.include_rejects):
        records.append(
            _write_sample(
                out, cfg, seed, counter, counter % cfg.n_languages,
                counter % cfg.n_speakers, mix1, mix2, lang_base, lang_offset,
                spk_amp, spk_beta, rng, reject=reject_modes[i % 2],
            )
        )
        counter += 1

    manifest_path = out / "manifest.json"
    save_manifest(records, manifest_path)
    return str(manifest_path), str(model_path)


def _write_sample(
    out, cfg, seed, index, lang_i, spk_i,
    mix1, mix2, lang_base, lang_offset, spk_amp, spk_beta, rng, reject,
):
    sample_seed = (seed * 1_000_003 + index) & 0x7FFFFFFF
    n_frames = int(rng.integers(cfg.min_frames, cfg.max_frames + 1))
    spec = SyntheticSpec(
        seed=sample_seed,
        d_audio=cfg.d_audio,
        d_text=cfg.d_text,
        n_waves=3,
        freq_band=SPEAKER_BANDS[spk_i],
    )
    audio, _ = synthetic_features(spec, n_frames)
    z, _ = planted_latent(spec, n_frames)
    drive = np.tanh(z @ mix1) + 0.5 * (z @ mix2)
    frames = cfg.expr_scale * spk_amp[spk_i] * drive + lang_offset[lang_i]
    frames = frames.astype(np.float32)
    t_hat = lang_base[lang_i] + 0.05 * make_rng(sample_seed, "jitter").normal(
        size=cfg.d_text
    ).astype(np.float32)

    sid = f"s{index:04d}"
    rel = {
        "expressions": f"samples/{sid}_expr.paf",
        "audio_feats": f"samples/{sid}_audio.paf",
        "t_hat": f"samples/{sid}_that.paf",
        "beta": f"samples/{sid}_beta.paf",
    }
    paf.write_paf(out / rel["expressions"], {"expressions": frames})
    paf.write_paf(
        out / rel["audio_feats"], {"audio_feats": audio.feats, "fps": np.float32(audio.fps)}
    )
    paf.write_paf(out / rel["t_hat"], {"t_hat": t_hat.astype(np.float32)})
    paf.write_paf(out / rel["beta"], {"beta": spk_beta[spk_i]})

    if reject == "pesq":
        pesq, rle = float(rng.uniform(0.5, 1.9)), float(rng.uniform(1.0, 4.0))
    elif reject == "rle":
        pesq, rle = float(rng.uniform(2.5, 4.5)), float(rng.uniform(5.5, 9.0))
    else:
        pesq, rle = float(rng.uniform(2.5, 4.5)), float(rng.uniform(1.0, 4.0))
    return SampleRecord(
        id=sid,
        language=f"lang{lang_i}",
        speaker=f"spk{spk_i}",
        n_frames=n_frames,
        fps=25,
        pesq=round(pesq, 3),
        rle=round(rle, 3),
        **rel,
    )
