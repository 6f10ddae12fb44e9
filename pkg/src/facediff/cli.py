"""Command-line operator surface.

Subcommands cover the pipeline end to end: synthetic data generation,
quality filtering, per-language splits, style and main-model training,
sampling, metric evaluation, mesh export and style-embedding export.
Every randomized subcommand takes an explicit --seed and is bit-for-bit
reproducible. Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric
failure; failures print one ``error: <kind>: <reason>`` line to stderr.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import conditioning, dataset, morphable, paf, trainer
from .diffusion import GuidanceConfig, cosine_schedule, sample_sequence
from .metrics import aggregate_report, evaluate_sequences
from .morphable import ExpressionSeq, IdentityShape
from .numerics import NumericsError, make_rng
from .style import StyleAutoencoder, StyleConfig, StyleEmbedding, train_style_autoencoder

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataError(Exception):
    pass


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args) or EXIT_OK
    except (DataError, paf.PafError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericsError, FloatingPointError) as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA


def build_parser():
    parser = argparse.ArgumentParser(
        prog="facediff",
        description="Speech-driven 3DMM expression engine: data, training, sampling, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--languages", type=int, default=3)
    p.add_argument("--speakers", type=int, default=3)
    p.add_argument("--samples-per-pair", type=int, default=2)
    p.add_argument("--min-frames", type=int, default=40)
    p.add_argument("--max-frames", type=int, default=80)
    p.add_argument("--d-audio", type=int, default=16)
    p.add_argument("--d-text", type=int, default=8)
    p.add_argument("--n-expr", type=int, default=53)
    p.add_argument("--n-mouth", type=int, default=13)
    p.add_argument("--n-shape", type=int, default=80)
    p.add_argument("--n-vertices", type=int, default=200)
    p.add_argument("--include-rejects", type=int, default=0)
    p.set_defaults(handler=cmd_gen_synthetic)

    p = sub.add_parser("filter-data", help="apply the quality keep/reject filter")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="kept-records manifest path")
    p.add_argument("--rejected-out", help="default: <out>.rejected.json")
    p.set_defaults(handler=cmd_filter_data)

    p = sub.add_parser("split-data", help="deterministic per-language train/val/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for split manifests")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train", type=int, default=450)
    p.add_argument("--val", type=int, default=50)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--speaker-disjoint", action="store_true")
    p.set_defaults(handler=cmd_split_data)

    p = sub.add_parser("train-style", help="train the style autoencoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.paf)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--window", type=int, default=75)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.set_defaults(handler=cmd_train_style)

    p = sub.add_parser("train", help="train the diffusion denoiser")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, help="morphable model .paf")
    p.add_argument("--style-checkpoint", help="frozen style autoencoder .paf")
    p.add_argument("--out", required=True, help="checkpoint path (.paf)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--config", help="JSON config mirroring TrainConfig")
    p.add_argument("--steps", type=int, help="override step count")
    p.add_argument("--no-style-s", action="store_true", help="ablation: null style input")
    p.add_argument("--no-text-t", action="store_true", help="ablation: null transcript input")
    p.add_argument("--no-style-loss", action="store_true", help="ablation: drop style loss")
    p.add_argument(
        "--lookup-table-language",
        action="store_true",
        help="ablation: learned per-language embedding instead of transcripts",
    )
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sample", help="generate an expression sequence from audio features")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--audio-feats", required=True)
    p.add_argument("--t-hat", required=True)
    p.add_argument("--beta", required=True)
    p.add_argument("--style-ref", help="expression-sequence .paf providing the style")
    p.add_argument("--style-checkpoint", help="style autoencoder .paf")
    p.add_argument("--guidance", type=float, nargs=2, default=[1.15, 1.15],
                   metavar=("W_AUDIO", "W_COND"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output expressions .paf")
    p.add_argument("--model", help="morphable model .paf (for --mesh-out)")
    p.add_argument("--mesh-out", help="also write the synthesized mesh sequence")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred-dir", required=True, help="directory of <id>.paf predictions")
    p.add_argument("--gt-manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="per-sample table; default <out>.csv")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("export-mesh", help="synthesize meshes from expressions")
    p.add_argument("--expr", required=True)
    p.add_argument("--beta", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--format", choices=("obj", "paf"), default="obj")
    p.add_argument("--clamp01", action="store_true",
                   help="clamp coefficients to [0, 1] before synthesis")
    p.add_argument("--out", required=True, help="directory (obj) or file (paf)")
    p.set_defaults(handler=cmd_export_mesh)

    p = sub.add_parser("export-embeddings", help="dump style embeddings to CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--style-checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_export_embeddings)

    return parser


# ---- handlers ---------------------------------------------------------


def cmd_gen_synthetic(args):
    cfg = dataset.SyntheticSetConfig(
        n_languages=args.languages,
        n_speakers=args.speakers,
        samples_per_pair=args.samples_per_pair,
        min_frames=args.min_frames,
        max_frames=args.max_frames,
        d_audio=args.d_audio,
        d_text=args.d_text,
        n_expr=args.n_expr,
        n_mouth=args.n_mouth,
        n_shape=args.n_shape,
        n_vertices=args.n_vertices,
        include_rejects=args.include_rejects,
    )
    manifest, model = dataset.generate_synthetic_set(args.out, args.seed, cfg)
    print(f"wrote {manifest} and {model}")


def cmd_filter_data(args):
    records, _ = dataset.load_manifest(args.manifest)
    kept, rejected = dataset.filter_manifest(records)
    _rebase_and_save(records_from=args.manifest, records=kept, out_path=args.out)
    rejected_path = args.rejected_out or f"{args.out}.rejected.json"
    with open(rejected_path, "w") as fh:
        json.dump(
            [{"id": r.id, "reason": reason} for r, reason in rejected], fh, indent=1
        )
    print(f"kept {len(kept)}, rejected {len(rejected)}")


def cmd_split_data(args):
    records, _ = dataset.load_manifest(args.manifest)
    spec = dataset.SplitSpec(train=args.train, val=args.val, test=args.test)
    splits = dataset.split_by_language(
        records, spec, seed=args.seed, speaker_disjoint=args.speaker_disjoint
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in splits.items():
        _rebase_and_save(records_from=args.manifest, records=part, out_path=out / f"{name}.json")
    print(
        "split sizes: "
        + ", ".join(f"{name}={len(part)}" for name, part in splits.items())
    )


def _rebase_and_save(records_from, records, out_path):
    """Save a manifest subset, rewriting paths relative to the new location."""
    src_base = os.path.dirname(os.path.abspath(records_from))
    dst_base = os.path.dirname(os.path.abspath(out_path))
    rebased = []
    for r in records:
        d = asdict(r)
        for key in ("expressions", "audio_feats", "t_hat", "beta"):
            d[key] = os.path.relpath(os.path.join(src_base, d[key]), dst_base)
        rebased.append(dataset.SampleRecord.from_dict(d))
    dataset.save_manifest(rebased, out_path)


def cmd_train_style(args):
    records, base = dataset.load_manifest(args.manifest)
    sequences = []
    for r in records:
        sample = dataset.load_sample(r, base)
        sequences.append(ExpressionSeq(sample.expressions, fps=r.fps))
    if not sequences:
        raise DataError("manifest has no records")
    config = StyleConfig(
        n_expr=sequences[0].n_params,
        width=args.width,
        layers=args.layers,
        heads=args.heads,
    )
    model, losses = train_style_autoencoder(
        sequences,
        config,
        seed=args.seed,
        steps=args.steps,
        batch_size=args.batch_size,
        window=args.window,
        learning_rate=args.learning_rate,
    )
    model.save(args.out)
    trainer.write_loss_log(losses, f"{args.out}.losses.csv")
    print(f"style checkpoint: {args.out} (final loss {losses[-1]:.6f})")


def cmd_train(args):
    records, base = dataset.load_manifest(args.manifest)
    samples = [dataset.load_sample(r, base) for r in records]
    morph = morphable.load_model(args.model)
    overrides = {"seed": args.seed}
    for flag, key in (
        ("no_style_s", "no_style_S"),
        ("no_text_t", "no_text_t"),
        ("no_style_loss", "no_style_loss"),
        ("lookup_table_language", "lookup_table_language"),
    ):
        if getattr(args, flag):
            overrides[key] = True
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.config:
        config = trainer.load_train_config(args.config, overrides)
    else:
        config = trainer.TrainConfig(**overrides)
    style = None
    if args.style_checkpoint:
        style = StyleAutoencoder.load(args.style_checkpoint)
        if style.config.width != config.style_width:
            raise DataError(
                f"style checkpoint width {style.config.width} != config "
                f"style_width {config.style_width}"
            )
    state = trainer.train_denoiser(samples, morph, style, config)
    trainer.save_checkpoint(state, args.out)
    trainer.write_loss_log(state.losses, f"{args.out}.losses.csv")
    print(f"checkpoint: {args.out} ({state.step} steps, final loss {state.losses[-1]:.6f})")


def cmd_sample(args):
    state = trainer.load_checkpoint(args.checkpoint)
    config = state.config
    audio, t_hat = conditioning.load_features(args.audio_feats, args.t_hat)
    beta_arrays = paf.read_paf(args.beta)
    if "beta" not in beta_arrays:
        raise DataError(f"{args.beta}: missing 'beta' array")
    beta = IdentityShape(beta_arrays["beta"])

    if config.no_style_S:
        style = StyleEmbedding(np.zeros(config.style_width, dtype=np.float32))
    else:
        if not (args.style_ref and args.style_checkpoint):
            raise DataError("--style-ref and --style-checkpoint required (checkpoint uses style)")
        style_model = StyleAutoencoder.load(args.style_checkpoint)
        ref_arrays = paf.read_paf(args.style_ref)
        if "expressions" not in ref_arrays:
            raise DataError(f"{args.style_ref}: missing 'expressions' array")
        style = style_model.style_embedding(ExpressionSeq(ref_arrays["expressions"]))

    guidance = GuidanceConfig(w_audio=args.guidance[0], w_cond=args.guidance[1])
    schedule = cosine_schedule(config.n_steps)
    seq = sample_sequence(
        state.denoiser,
        schedule,
        audio,
        beta,
        t_hat,
        style,
        guidance,
        make_rng(args.seed, "cli-sample"),
        force_null_text=config.no_text_t,
        force_null_style=config.no_style_S,
    )
    paf.write_paf(args.out, {"expressions": seq.frames, "fps": np.float32(seq.fps)})
    if args.mesh_out:
        if not args.model:
            raise DataError("--mesh-out requires --model")
        morph = morphable.load_model(args.model)
        meshes = morphable.expressions_to_meshes(morph, beta, seq)
        paf.write_paf(args.mesh_out, {"meshes": meshes.frames, "fps": np.float32(meshes.fps)})
    print(f"wrote {args.out} ({seq.n_frames} frames)")


def cmd_eval(args):
    records, base = dataset.load_manifest(args.gt_manifest)
    morph = morphable.load_model(args.model)
    pred_dir = Path(args.pred_dir)
    per_sample, languages, unmatched = [], [], []
    for r in records:
        pred_path = pred_dir / f"{r.id}.paf"
        if not pred_path.exists():
            unmatched.append(r.id)
            continue
        arrays = paf.read_paf(pred_path)
        if "expressions" not in arrays:
            raise DataError(f"{pred_path}: missing 'expressions' array")
        sample = dataset.load_sample(r, base)
        scores = evaluate_sequences(
            morph,
            IdentityShape(sample.beta),
            ExpressionSeq(arrays["expressions"], fps=r.fps),
            ExpressionSeq(sample.expressions, fps=r.fps),
        )
        scores["id"] = r.id
        scores["language"] = r.language
        per_sample.append(scores)
        languages.append(r.language)
    if not per_sample:
        raise DataError("no prediction files matched the manifest ids")
    report = aggregate_report(per_sample, languages)
    payload = report.as_dict()
    if unmatched:
        payload["unmatched_ids"] = unmatched
        print(f"warning: {len(unmatched)} manifest ids had no prediction", file=sys.stderr)
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=1)
    csv_path = args.csv or f"{args.out}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "language", "lve", "mve", "dtw", "mod"])
        for s in per_sample:
            writer.writerow(
                [s["id"], s["language"]] + [f"{s[k]:.8f}" for k in ("lve", "mve", "dtw", "mod")]
            )
    print(json.dumps({k: payload[k] for k in ("lve", "mve", "dtw", "mod")}))


def cmd_export_mesh(args):
    arrays = paf.read_paf(args.expr)
    if "expressions" not in arrays:
        raise DataError(f"{args.expr}: missing 'expressions' array")
    frames = arrays["expressions"]
    if args.clamp01:
        frames = np.clip(frames, 0.0, 1.0)
    beta_arrays = paf.read_paf(args.beta)
    beta = IdentityShape(beta_arrays["beta"])
    morph = morphable.load_model(args.model)
    meshes = morphable.expressions_to_meshes(morph, beta, ExpressionSeq(frames))
    if args.format == "paf":
        paf.write_paf(args.out, {"meshes": meshes.frames, "fps": np.float32(meshes.fps)})
        print(f"wrote {args.out}")
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in range(meshes.n_frames):
        lines = [
            f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in meshes.frames[t].astype(np.float64)
        ]
        (out / f"frame_{t:05d}.obj").write_text("\n".join(lines) + "\n")
    print(f"wrote {meshes.n_frames} OBJ frames to {out}")


def cmd_export_embeddings(args):
    records, base = dataset.load_manifest(args.manifest)
    style_model = StyleAutoencoder.load(args.style_checkpoint)
    width = style_model.config.width
    rows, skipped = [], 0
    for r in records:
        try:
            sample = dataset.load_sample(r, base)
        except (OSError, ValueError, paf.PafError) as exc:
            print(f"warning: skipping {r.id}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        s = style_model.style_embedding(ExpressionSeq(sample.expressions, fps=r.fps)).s
        rows.append((r, s, sample.t_hat))
    if not rows:
        raise DataError("no usable records")
    d_text = rows[0][2].shape[0]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "speaker", "language"]
            + [f"s{i}" for i in range(width)]
            + [f"t{i}" for i in range(d_text)]
        )
        for r, s, t_hat in rows:
            writer.writerow(
                [r.id, r.speaker, r.language]
                + [f"{v:.8f}" for v in s]
                + [f"{v:.8f}" for v in t_hat]
            )
    print(f"wrote {len(rows)} rows to {args.out}" + (f" ({skipped} skipped)" if skipped else ""))


if __name__ == "__main__":
    sys.exit(main())
