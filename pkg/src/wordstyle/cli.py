"""Command-line surface for the word-style synthesis pipeline.

Subcommands: ``gen-corpus``, ``train``, ``synth``, ``transfer``, ``eval``,
``stats`` and ``plot``. Exit codes: 0 on success, 1 on runtime failure, 2 on
usage or validation errors. Every command is deterministic given its flags
(and seed) and never mutates its input directories.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plotting, synthesis
from .checkpoint import load_checkpoint
from .control import compute_token_stats, style_transfer
from .corpus import (
    generate_synthetic_corpus,
    load_corpus,
    parse_phoneme_text,
)
from .metrics import (
    BANDWIDTH_DURATION_Z,
    BANDWIDTH_PITCH_HZ,
    BANDWIDTH_PITCH_STD_HZ,
)
from .training import TrainingConfig, train


class UsageError(ValueError):
    """Bad flags or input data; maps to exit code 2."""


@dataclass(frozen=True)
class BiasSpec:
    """Parsed ``TOKEN:STDS[:WORD]`` bias, e.g. ``3:+2`` or ``7:-1:4``.

    A missing word index means the bias applies to all words.
    """

    token_id: int
    amount_stds: float
    word_index: int | None = None


def parse_bias_spec(text: str) -> BiasSpec:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"bias spec must be TOKEN:STDS[:WORD], got {text!r}")
    try:
        token_id = int(parts[0])
        amount = float(parts[1])
        word = int(parts[2]) if len(parts) == 3 else None
    except ValueError:
        raise UsageError(f"malformed bias spec {text!r}") from None
    if token_id < 0:
        raise UsageError(f"bias token id must be non-negative, got {token_id}")
    if word is not None and word < 0:
        raise UsageError(f"bias word index must be non-negative, got {word}")
    return BiasSpec(token_id, amount, word)


def _read_nonempty_lines(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(str(exc)) from None
    return [line.strip() for line in text.splitlines() if line.strip()]


def _load_model(model_dir):
    ckpt = load_checkpoint(model_dir)
    return ckpt


def _find_utterance(utterances, utt_id: str):
    for utt in utterances:
        if utt.id == utt_id:
            return utt
    raise UsageError(f"utterance {utt_id!r} not found in corpus")


# -- commands -----------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    generate_synthetic_corpus(args.out, args.utterances, args.seed)
    print(f"wrote {args.utterances} utterances to {args.out}")
    return 0


def cmd_train(args) -> int:
    utterances = load_corpus(args.corpus)
    config = TrainingConfig(
        batch_size=args.batch_size,
        base_lr=args.base_lr,
        warmup_steps=args.warmup,
        decay_steps=args.decay,
        seed=args.seed,
        max_steps=args.steps,
        snapshot_interval=args.snapshot_interval,
    )
    result = train(utterances, config, out_dir=args.out)
    final = result.history[-1]
    print(f"step {final.step}: total loss {final.total:.4f}; checkpoint in {args.out}")
    return 0


def _synthesize_lines(model, lines, styles_fn, out_dir) -> int:
    for i, line in enumerate(lines):
        text = parse_phoneme_text(line)
        styles = styles_fn(text)
        result = model.synthesize(text, styles)
        synthesis.write_synthesis(out_dir, f"synth{i:04d}", text, result)
    return len(lines)


def cmd_synth(args) -> int:
    ckpt = _load_model(args.model)
    lines = _read_nonempty_lines(args.text)
    if not lines:
        raise UsageError(f"text file {args.text} has no utterances")
    biases = [parse_bias_spec(spec) for spec in args.bias]
    if biases and ckpt.token_stats is None:
        raise UsageError("checkpoint has no token statistics; cannot apply biases")

    reference_utt = None
    if args.reference is not None:
        if args.corpus is None:
            raise UsageError("--reference requires --corpus")
        reference_utt = _find_utterance(load_corpus(args.corpus), args.reference)

    def styles_fn(text):
        if reference_utt is not None:
            styles = synthesis.reference_styles_for_text(ckpt.model, reference_utt, text)
        else:
            styles = ckpt.model.prior_styles(text)
        if biases:
            styles = synthesis.apply_biases(
                ckpt.model,
                styles,
                [(b.token_id, b.amount_stds, b.word_index) for b in biases],
                ckpt.token_stats,
            )
        return styles

    n = _synthesize_lines(ckpt.model, lines, styles_fn, args.out)
    print(f"wrote {n} utterances to {args.out}")
    return 0


def cmd_transfer(args) -> int:
    ckpt = _load_model(args.model)
    lines = _read_nonempty_lines(args.text)
    if not lines:
        raise UsageError(f"text file {args.text} has no utterances")
    source = _find_utterance(load_corpus(args.corpus), args.source)

    def styles_fn(text):
        return style_transfer(ckpt.model, source, text, args.alpha)

    n = _synthesize_lines(ckpt.model, lines, styles_fn, args.out)
    print(f"wrote {n} utterances to {args.out}")
    return 0


def cmd_eval(args) -> int:
    ckpt = _load_model(args.model)
    utterances = load_corpus(args.corpus)
    ids = _read_nonempty_lines(args.split)
    if not ids:
        raise UsageError(f"split file {args.split} is empty")
    by_id = {utt.id: utt for utt in utterances}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise UsageError(f"split ids not in corpus: {', '.join(missing)}")
    aggregate, per_utterance = synthesis.evaluate_reconstruction(
        ckpt.model, [by_id[i] for i in ids], args.mode
    )
    report = {
        "model_id": Path(args.model).name,
        "split": Path(args.split).name,
        "mode": args.mode,
        **aggregate,
        "per_utterance": per_utterance,
    }
    plotting.atomic_write_text(args.out, json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(
        f"{args.mode}: ffe={aggregate['ffe']:.4f} vde={aggregate['vde']:.4f} "
        f"gpe={aggregate['gpe']:.4f} mcd={aggregate['mcd']:.4f}"
    )
    return 0


def cmd_stats(args) -> int:
    ckpt = _load_model(args.model)
    utterances = load_corpus(args.corpus)
    stats = compute_token_stats(ckpt.model, utterances)
    plotting.atomic_write_text(
        args.out, json.dumps(stats.to_json(), indent=1, sort_keys=True) + "\n"
    )
    print(f"wrote token statistics for {len(stats.means)} tokens to {args.out}")
    return 0


def _collect_variants(in_dir) -> dict[str, list[synthesis.SynthRecord]]:
    """Plot inputs: the directory itself, or its subdirectories, as variants."""
    in_dir = Path(in_dir)
    if not in_dir.is_dir():
        raise UsageError(f"not a directory: {in_dir}")
    records = synthesis.load_records(in_dir)
    if records:
        return {in_dir.name: records}
    variants = {}
    for sub in sorted(p for p in in_dir.iterdir() if p.is_dir()):
        sub_records = synthesis.load_records(sub)
        if sub_records:
            variants[sub.name] = sub_records
    if not variants:
        raise UsageError(f"no synthesis outputs or corpus found under {in_dir}")
    return variants


def cmd_plot(args) -> int:
    variants = _collect_variants(args.in_dir)
    out = Path(args.out)
    svg_path = out if out.suffix else out.with_suffix(".svg")
    csv_path = svg_path.with_suffix(".csv")

    if args.kind == "f0":
        curves = plotting.variant_f0_curves(variants)
        longest = max(len(c) for c in curves.values())
        csv_text = plotting.curves_csv("frame", np.arange(longest, dtype=np.float64), curves)
        plotting.render_f0_overlay(svg_path, curves)
    else:
        if args.kind == "durations-kde":
            stats = None
            if args.stats_corpus is not None:
                from .corpus import znorm_durations

                stats = znorm_durations(load_corpus(args.stats_corpus)).stats
            samples = plotting.variant_duration_samples(variants, stats)
            bandwidth, xlabel = BANDWIDTH_DURATION_Z, "duration (z-units)"
        elif args.kind == "pitch-kde":
            samples = plotting.variant_pitch_samples(variants)
            bandwidth, xlabel = BANDWIDTH_PITCH_HZ, "F0 (Hz)"
        elif args.kind == "pitch-std-kde":
            samples = plotting.variant_pitch_std_samples(variants)
            bandwidth, xlabel = BANDWIDTH_PITCH_STD_HZ, "per-utterance F0 std (Hz)"
        else:
            raise UsageError(f"unknown plot kind {args.kind!r}")
        grid, curves = plotting.kde_over_common_grid(samples, bandwidth)
        csv_text = plotting.curves_csv("grid_value", grid, curves)
        plotting.render_kde(svg_path, grid, curves, xlabel)

    plotting.atomic_write_text(csv_path, csv_text)
    print(f"wrote {svg_path} and {csv_path}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wordstyle",
        description="Word-level style tokens for feature-space speech synthesis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--utterances", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--base-lr", type=float, default=1e-3)
    p.add_argument("--warmup", type=int, default=200)
    p.add_argument("--decay", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshot-interval", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="synthesize text from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True, help="file with one utterance per line")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--reference", metavar="UTT_ID", help="style from this utterance's audio")
    mode.add_argument("--prior", action="store_true", help="style from the text prior")
    p.add_argument("--corpus", help="corpus directory (required with --reference)")
    p.add_argument(
        "--bias",
        action="append",
        default=[],
        metavar="TOKEN:STDS[:WORD]",
        help="shift a style token; repeatable",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("transfer", help="blend a source utterance's style onto new text")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--source", required=True, metavar="UTT_ID")
    p.add_argument("--text", required=True)
    p.add_argument("--alpha", type=float, default=1.0, help="blend weight in [0, 1]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("eval", help="score reconstructions against ground truth")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True, help="file listing utterance ids")
    p.add_argument("--mode", choices=("reference", "prior"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="token attention statistics over a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("plot", help="render an SVG report plus its CSV data")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--kind", choices=plotting.PLOT_KINDS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--stats-corpus",
        help="corpus supplying duration z-statistics (durations-kde only)",
    )
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  (runtime failures map to exit 1)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
