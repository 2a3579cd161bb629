"""Word-level style tokens for speech synthesis in acoustic-feature space.

A compact encoder/decoder stack: a reference summarizer attends over a bank
of learnable style tokens to give every word a style embedding, an
autoregressive prior predicts those embeddings from text alone, and a
non-attentive decoder (duration predictor + Gaussian upsampling + frame
decoder) renders LPC-style feature frames. Ships with a synthetic corpus
generator, objective metrics (FFE/VDE/GPE/MCD over DTW alignments, KDE
reports) and a CLI.
"""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .control import TokenWeightStats, bias_embeddings, compute_token_stats, style_transfer
from .corpus import (
    AcousticFeatures,
    CorpusError,
    GeneratorConfig,
    PhonemeSequence,
    StyleFactors,
    Utterance,
    generate_synthetic_corpus,
    load_corpus,
    load_style_factors,
    parse_phoneme_text,
    read_f32,
    save_corpus,
    write_f32,
    znorm_durations,
)
from .metrics import (
    MetricsReport,
    PitchTrack,
    compute_ffe_vde_gpe,
    compute_mcd,
    dtw_align,
    evaluate_pair,
    extract_pitch,
    kde_estimate,
)
from .model import ModelConfig, SynthesisResult, WordStyleModel
from .training import TrainingConfig, TrainResult, train

__all__ = [
    "AcousticFeatures",
    "Checkpoint",
    "CheckpointError",
    "CorpusError",
    "GeneratorConfig",
    "MetricsReport",
    "ModelConfig",
    "PhonemeSequence",
    "PitchTrack",
    "StyleFactors",
    "SynthesisResult",
    "TokenWeightStats",
    "TrainResult",
    "TrainingConfig",
    "Utterance",
    "WordStyleModel",
    "bias_embeddings",
    "compute_ffe_vde_gpe",
    "compute_mcd",
    "compute_token_stats",
    "dtw_align",
    "evaluate_pair",
    "extract_pitch",
    "generate_synthetic_corpus",
    "kde_estimate",
    "load_checkpoint",
    "load_corpus",
    "load_style_factors",
    "parse_phoneme_text",
    "read_f32",
    "save_checkpoint",
    "save_corpus",
    "style_transfer",
    "train",
    "write_f32",
    "znorm_durations",
]

__version__ = "0.1.0"
