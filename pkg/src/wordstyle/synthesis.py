"""Feature-space synthesis: style selection, biasing, output files and the
reconstruction evaluation runner.

Synthesized utterances are written in the corpus ``.f32`` feature format with
a JSON sidecar (``<id>.synth.json``) holding the id, the predicted durations
and frame count plus the phoneme/word layout, and an F0 contour CSV
(``<id>_f0.csv``) for contour comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .control import TokenWeightStats, bias_embeddings, style_transfer
from .corpus import MANIFEST_NAME, PhonemeSequence, Utterance, load_corpus, read_f32, write_f32
from .encoders import WordStyleEmbeddings
from .model import SynthesisResult, WordStyleModel

SIDECAR_SUFFIX = ".synth.json"


def reference_styles_for_text(
    model: WordStyleModel, reference: Utterance, text: PhonemeSequence
) -> WordStyleEmbeddings:
    """Reference-derived styles mapped onto a (possibly different) text.

    Index-matched words take the reference embedding; any extra target words
    fall back to the prior.
    """
    return style_transfer(model, reference, text, alpha=1.0)


def apply_biases(
    model: WordStyleModel,
    styles: WordStyleEmbeddings,
    biases: list[tuple[int, float, int | None]],
    stats: TokenWeightStats,
) -> WordStyleEmbeddings:
    """Apply (token_id, amount_stds, word_or_None) biases in order."""
    for token_id, amount, word in biases:
        words = None if word is None else [word]
        styles = bias_embeddings(
            styles, token_id, amount, model.token_bank.tokens, stats, words
        )
    return styles


def write_synthesis(
    out_dir, utt_id: str, text: PhonemeSequence, result: SynthesisResult
) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_f32(out_dir / f"{utt_id}.f32", result.features)
    sidecar = {
        "id": utt_id,
        "durations_predicted": list(result.durations),
        "n_frames": int(result.features.shape[0]),
        "phonemes": list(text.phonemes),
        "word_ids": list(text.word_ids),
    }
    with open(out_dir / f"{utt_id}{SIDECAR_SUFFIX}", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=1, sort_keys=True)
    track = metrics.extract_pitch(result.features)
    with open(out_dir / f"{utt_id}_f0.csv", "w", encoding="utf-8") as f:
        f.write("frame,f0\n")
        for t, f0 in enumerate(track.f0):
            f.write(f"{t},{f0:.6g}\n")


@dataclass
class SynthRecord:
    """One utterance's data as found in a synth output or corpus directory."""

    id: str
    features: np.ndarray
    durations: list[int]
    phonemes: list[str] | None = None


def load_synth_outputs(path) -> list[SynthRecord]:
    path = Path(path)
    records = []
    for sidecar_path in sorted(path.glob(f"*{SIDECAR_SUFFIX}")):
        with open(sidecar_path, encoding="utf-8") as f:
            sidecar = json.load(f)
        features = read_f32(path / f"{sidecar['id']}.f32", int(sidecar["n_frames"]))
        records.append(
            SynthRecord(
                id=sidecar["id"],
                features=features,
                durations=[int(d) for d in sidecar["durations_predicted"]],
                phonemes=list(sidecar["phonemes"]) if "phonemes" in sidecar else None,
            )
        )
    return records


def load_records(path) -> list[SynthRecord]:
    """Records from either a synth output directory or a corpus directory."""
    path = Path(path)
    if (path / MANIFEST_NAME).is_file():
        return [
            SynthRecord(
                id=utt.id,
                features=utt.features.frames,
                durations=list(utt.durations),
                phonemes=list(utt.text.phonemes),
            )
            for utt in load_corpus(path)
        ]
    return load_synth_outputs(path)


def evaluate_reconstruction(
    model: WordStyleModel,
    utterances: list[Utterance],
    mode: str,
) -> tuple[dict, list[dict]]:
    """Reconstruct each utterance from text with predicted durations and
    score it against the ground truth.

    ``mode`` selects the style source: "reference" attends over the
    utterance's own audio, "prior" uses the autoregressive prior. Returns the
    aggregate means and the per-utterance reports.
    """
    if mode not in ("reference", "prior"):
        raise ValueError(f"unknown mode: {mode}")
    if not utterances:
        raise ValueError("no utterances to evaluate")
    per_utterance = []
    for utt in utterances:
        if mode == "reference":
            styles = model.reference_styles(
                utt.features.frames, utt.durations, utt.text.word_ids
            )
        else:
            styles = model.prior_styles(utt.text)
        result = model.synthesize(utt.text, styles)
        report = metrics.evaluate_pair(utt.features.frames, result.features)
        per_utterance.append(
            {
                "id": utt.id,
                "ffe": report.ffe,
                "vde": report.vde,
                "gpe": report.gpe,
                "mcd": report.mcd,
                "n_frames_compared": report.n_frames_compared,
            }
        )
    aggregate = {
        key: float(np.mean([row[key] for row in per_utterance]))
        for key in ("ffe", "vde", "gpe", "mcd")
    }
    aggregate["n_utterances"] = len(per_utterance)
    return aggregate, per_utterance
