"""Data model and on-disk corpus format, plus the deterministic synthetic generator.

A corpus directory holds ``manifest.json`` with one entry per utterance and a
raw little-endian float32 feature file per utterance (``[n_frames x 22]``,
row-major, extension ``.f32``). The synthetic generator additionally writes a
``style_factors.json`` sidecar with the latent per-word pitch/rate factors;
the sidecar is for testing only and is never read by the model.

Feature channel layout: channels 0-19 are cepstral-like coefficients,
channel 20 is the pitch period in samples at 24 kHz, channel 21 is the pitch
correlation in [-1, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import inventory

N_CHANNELS = 22
N_CEPSTRAL = 20
CH_PERIOD = 20
CH_CORR = 21
SAMPLE_RATE = 24000
BASE_PERIOD = 160.0  # samples; 24000 / 160 = 150 Hz at pitch_factor 0
VOICED_CORR = 0.8
UNVOICED_CORR = 0.1

MANIFEST_NAME = "manifest.json"
STYLE_FACTORS_NAME = "style_factors.json"
STD_FLOOR = 1e-6


class CorpusError(ValueError):
    """Raised for malformed corpora, manifests or utterances."""


@dataclass(frozen=True)
class PhonemeSequence:
    """Phoneme symbols with their word membership.

    ``word_ids`` is non-decreasing, starts at 0 and increases in steps of
    exactly 1 at word boundaries, so every word owns at least one phoneme.
    """

    phonemes: tuple[str, ...]
    word_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.phonemes) == 0:
            raise CorpusError("empty phoneme sequence")
        if len(self.phonemes) != len(self.word_ids):
            raise CorpusError("phonemes and word_ids length mismatch")
        if self.word_ids[0] != 0:
            raise CorpusError("word_ids must start at 0")
        for prev, cur in zip(self.word_ids, self.word_ids[1:]):
            if cur not in (prev, prev + 1):
                raise CorpusError("word_ids must be non-decreasing in steps of 1")

    @property
    def n_phonemes(self) -> int:
        return len(self.phonemes)

    @property
    def n_words(self) -> int:
        return self.word_ids[-1] + 1

    def word_phoneme_slices(self) -> list[slice]:
        """Phoneme index range of each word."""
        bounds = [0]
        for i, (prev, cur) in enumerate(zip(self.word_ids, self.word_ids[1:])):
            if cur != prev:
                bounds.append(i + 1)
        bounds.append(len(self.phonemes))
        return [slice(a, b) for a, b in zip(bounds, bounds[1:])]


@dataclass
class AcousticFeatures:
    """A ``[n_frames x 22]`` float32 feature matrix."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[1] != N_CHANNELS:
            raise CorpusError(
                f"features must be [n_frames x {N_CHANNELS}], got {self.frames.shape}"
            )
        if self.frames.shape[0] < 1:
            raise CorpusError("features must contain at least one frame")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class Utterance:
    id: str
    text: PhonemeSequence
    durations: tuple[int, ...]
    features: AcousticFeatures

    def __post_init__(self):
        self.durations = tuple(int(d) for d in self.durations)
        if len(self.durations) != self.text.n_phonemes:
            raise CorpusError(f"{self.id}: one duration per phoneme required")
        if any(d < 1 for d in self.durations):
            raise CorpusError(f"{self.id}: durations must be positive")
        if sum(self.durations) != self.features.n_frames:
            raise CorpusError(
                f"{self.id}: durations sum to {sum(self.durations)} "
                f"but features have {self.features.n_frames} frames"
            )


@dataclass(frozen=True)
class StyleFactors:
    """Latent per-word generation factors (synthetic corpus only)."""

    pitch_factors: tuple[float, ...]
    rate_factors: tuple[float, ...]


@dataclass(frozen=True)
class GeneratorConfig:
    words_per_utterance: tuple[int, int] = (2, 8)
    phonemes_per_word: tuple[int, int] = (1, 5)
    noise_std: float = 0.05


def phoneme_frame_spans(durations) -> list[tuple[int, int]]:
    """Half-open frame span of each phoneme under cumulative durations."""
    spans = []
    start = 0
    for d in durations:
        spans.append((start, start + int(d)))
        start += int(d)
    return spans


def word_frame_spans(durations, word_ids) -> list[tuple[int, int]]:
    """Half-open frame span of each word."""
    spans = phoneme_frame_spans(durations)
    out: list[tuple[int, int]] = []
    for span, wid in zip(spans, word_ids):
        if wid == len(out):
            out.append(span)
        else:
            out[wid] = (out[wid][0], span[1])
    return out


def parse_phoneme_text(line: str) -> PhonemeSequence:
    """Parse one utterance of text: words split on spaces, phonemes on '.'.

    Example: ``"hh.eh.l.ow w.er.l.d"`` is two words of 4 phonemes each.
    """
    words = [w for w in line.strip().split() if w]
    if not words:
        raise CorpusError("empty text line")
    phonemes: list[str] = []
    word_ids: list[int] = []
    for wid, word in enumerate(words):
        symbols = [s for s in word.split(".") if s]
        if not symbols:
            raise CorpusError(f"word {wid} has no phonemes")
        for sym in symbols:
            inventory.phoneme_to_index(sym)
        phonemes.extend(symbols)
        word_ids.extend([wid] * len(symbols))
    return PhonemeSequence(tuple(phonemes), tuple(word_ids))


def write_f32(path: Path, array: np.ndarray) -> None:
    np.ascontiguousarray(array, dtype="<f4").tofile(path)


def read_f32(path: Path, n_rows: int, n_cols: int = N_CHANNELS) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size != n_rows * n_cols:
        raise CorpusError(
            f"{path.name}: expected {n_rows * n_cols} values, found {data.size}"
        )
    return data.reshape(n_rows, n_cols)


def pitch_factor_to_period(pitch_factor: float) -> float:
    """Pitch period in samples for a latent pitch factor in [-1, 1]."""
    return BASE_PERIOD * 2.0 ** (-0.5 * pitch_factor)


def scaled_duration(base: int, rate_factor: float) -> int:
    """Frame count for a phoneme under a latent rate factor, clamped to >= 1."""
    return max(int(np.round(base * 2.0 ** (-0.5 * rate_factor))), 1)


def generate_synthetic_corpus(
    out_dir,
    n_utterances: int,
    seed: int,
    config: GeneratorConfig = GeneratorConfig(),
) -> list[Utterance]:
    """Generate and write a deterministic synthetic corpus.

    Each word draws latent pitch/rate factors uniformly from [-1, 1]; cepstral
    channels are per-phoneme templates plus Gaussian noise, the period channel
    encodes the word's pitch factor and the correlation channel encodes the
    vowel/consonant voicing class. Pure function of (n_utterances, seed,
    config); generation is single-threaded.
    """
    if n_utterances < 1:
        raise CorpusError("n_utterances must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not out_dir.is_dir():
        raise CorpusError(f"not a writable directory: {out_dir}")

    rng = np.random.default_rng(seed)
    lo_w, hi_w = config.words_per_utterance
    lo_p, hi_p = config.phonemes_per_word

    utterances: list[Utterance] = []
    factors: dict[str, StyleFactors] = {}
    for n in range(n_utterances):
        utt_id = f"utt{n:05d}"
        n_words = int(rng.integers(lo_w, hi_w + 1))
        phonemes: list[str] = []
        word_ids: list[int] = []
        durations: list[int] = []
        pitch_factors: list[float] = []
        rate_factors: list[float] = []
        rows: list[np.ndarray] = []
        for wid in range(n_words):
            n_ph = int(rng.integers(lo_p, hi_p + 1))
            symbols = [
                inventory.PHONEMES[int(i)]
                for i in rng.integers(0, len(inventory.PHONEMES), size=n_ph)
            ]
            pitch = float(rng.uniform(-1.0, 1.0))
            rate = float(rng.uniform(-1.0, 1.0))
            pitch_factors.append(pitch)
            rate_factors.append(rate)
            period = pitch_factor_to_period(pitch)
            for sym in symbols:
                dur = scaled_duration(
                    int(inventory.BASE_DURATIONS[inventory.phoneme_to_index(sym)]),
                    rate,
                )
                block = np.empty((dur, N_CHANNELS), dtype=np.float32)
                template = inventory.TEMPLATES[inventory.phoneme_to_index(sym)]
                noise = rng.normal(0.0, config.noise_std, size=(dur, N_CEPSTRAL))
                block[:, :N_CEPSTRAL] = template + noise
                block[:, CH_PERIOD] = period
                block[:, CH_CORR] = (
                    VOICED_CORR if inventory.is_vowel(sym) else UNVOICED_CORR
                )
                rows.append(block)
                durations.append(dur)
                phonemes.append(sym)
                word_ids.append(wid)
        utt = Utterance(
            id=utt_id,
            text=PhonemeSequence(tuple(phonemes), tuple(word_ids)),
            durations=tuple(durations),
            features=AcousticFeatures(np.concatenate(rows, axis=0)),
        )
        utterances.append(utt)
        factors[utt_id] = StyleFactors(tuple(pitch_factors), tuple(rate_factors))

    save_corpus(utterances, out_dir, style_factors=factors)
    return utterances


def save_corpus(
    utterances: list[Utterance],
    out_dir,
    style_factors: dict[str, StyleFactors] | None = None,
) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    for utt in sorted(utterances, key=lambda u: u.id):
        feature_file = f"{utt.id}.f32"
        write_f32(out_dir / feature_file, utt.features.frames)
        manifest.append(
            {
                "id": utt.id,
                "phonemes": list(utt.text.phonemes),
                "word_ids": list(utt.text.word_ids),
                "durations": list(utt.durations),
                "n_frames": utt.features.n_frames,
                "feature_file": feature_file,
            }
        )
    with open(out_dir / MANIFEST_NAME, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    if style_factors is not None:
        payload = {
            utt_id: {
                "pitch_factors": list(sf.pitch_factors),
                "rate_factors": list(sf.rate_factors),
            }
            for utt_id, sf in sorted(style_factors.items())
        }
        with open(out_dir / STYLE_FACTORS_NAME, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=1, sort_keys=True)


def load_corpus(path) -> list[Utterance]:
    """Load a corpus directory, validating every utterance invariant.

    Returns utterances in deterministic order (sorted by id). Errors name the
    offending utterance.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise CorpusError(f"missing manifest: {manifest_path}")
    with open(manifest_path, encoding="utf-8") as f:
        manifest = json.load(f)

    utterances = []
    for entry in manifest:
        utt_id = entry.get("id", "<missing id>")
        feature_path = path / entry["feature_file"]
        if not feature_path.is_file():
            raise CorpusError(f"{utt_id}: missing feature file {feature_path.name}")
        try:
            frames = read_f32(feature_path, int(entry["n_frames"]))
            utt = Utterance(
                id=utt_id,
                text=PhonemeSequence(
                    tuple(entry["phonemes"]), tuple(int(w) for w in entry["word_ids"])
                ),
                durations=tuple(entry["durations"]),
                features=AcousticFeatures(frames),
            )
        except CorpusError as exc:
            raise CorpusError(f"{utt_id}: {exc}") from None
        utterances.append(utt)
    utterances.sort(key=lambda u: u.id)
    return utterances


def load_style_factors(path) -> dict[str, StyleFactors]:
    with open(Path(path) / STYLE_FACTORS_NAME, encoding="utf-8") as f:
        payload = json.load(f)
    return {
        utt_id: StyleFactors(tuple(v["pitch_factors"]), tuple(v["rate_factors"]))
        for utt_id, v in payload.items()
    }


@dataclass(frozen=True)
class DurationEntry:
    utterance_id: str
    position: int
    phoneme: str
    duration: int
    zscore: float


@dataclass
class DurationZNorm:
    """Per-phone-class duration statistics and the per-occurrence z table."""

    stats: dict[str, tuple[float, float]]
    entries: list[DurationEntry] = field(default_factory=list)

    def zscores(self) -> np.ndarray:
        return np.array([e.zscore for e in self.entries], dtype=np.float64)


def znorm_duration_entries(
    entries: list[tuple[str, list[str], list[int]]],
    stats: dict[str, tuple[float, float]] | None = None,
) -> DurationZNorm:
    """Z-normalize (id, phonemes, durations) rows per phone class.

    Without ``stats`` the per-class population mean/std are computed from the
    rows themselves; the std is floored at 1e-6 so zero-variance classes
    normalize to 0.
    """
    if not entries:
        raise CorpusError("empty corpus")
    if stats is None:
        by_class: dict[str, list[int]] = {}
        for _, phonemes, durations in entries:
            for sym, dur in zip(phonemes, durations):
                by_class.setdefault(sym, []).append(dur)
        stats = {}
        for sym, durs in by_class.items():
            arr = np.asarray(durs, dtype=np.float64)
            stats[sym] = (float(arr.mean()), float(arr.std()))

    result = DurationZNorm(stats=stats)
    for utt_id, phonemes, durations in entries:
        for pos, (sym, dur) in enumerate(zip(phonemes, durations)):
            if sym not in stats:
                raise CorpusError(f"no duration statistics for phone class {sym!r}")
            mu, sigma = stats[sym]
            z = (dur - mu) / max(sigma, STD_FLOOR)
            result.entries.append(DurationEntry(utt_id, pos, sym, dur, float(z)))
    return result


def znorm_durations(utterances: list[Utterance]) -> DurationZNorm:
    """Z-normalize phoneme durations per phone class over the whole corpus."""
    return znorm_duration_entries(
        [(utt.id, list(utt.text.phonemes), list(utt.durations)) for utt in utterances]
    )
