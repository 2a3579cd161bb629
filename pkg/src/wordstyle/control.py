"""Style manipulation: token weight statistics, std-scaled biasing and
style transfer with prior mixing.

Biasing adds the chosen token's vector to selected word embeddings, scaled by
a multiple of that token's corpus weight standard deviation. Working in
multiples of the per-token std makes changes perceptually comparable across
tokens; working in embedding space makes the same operation apply to
reference-derived, prior-generated and already-biased embeddings alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .corpus import PhonemeSequence, Utterance
from .encoders import WordStyleEmbeddings
from .model import WordStyleModel

STD_FLOOR = 1e-6


@dataclass
class TokenWeightStats:
    """Per-token mean and population std of attention weight over a corpus."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.stds = np.asarray(self.stds, dtype=np.float64)
        if self.means.shape != self.stds.shape or self.means.ndim != 1:
            raise ValueError("means and stds must be matching vectors")

    @property
    def n_tokens(self) -> int:
        return self.means.shape[0]

    def to_json(self) -> dict:
        return {
            f"token_{k}": {"mean": float(self.means[k]), "std": float(self.stds[k])}
            for k in range(self.n_tokens)
        }

    @classmethod
    def from_json(cls, payload: dict) -> "TokenWeightStats":
        n = len(payload)
        means = np.zeros(n)
        stds = np.zeros(n)
        for k in range(n):
            entry = payload[f"token_{k}"]
            means[k] = entry["mean"]
            stds[k] = entry["std"]
        return cls(means=means, stds=stds)


@torch.no_grad()
def compute_token_stats(
    model: WordStyleModel, utterances: list[Utterance]
) -> TokenWeightStats:
    """Attention-weight statistics over every word of a corpus."""
    if not utterances:
        raise ValueError("empty corpus")
    all_weights = []
    for utt in utterances:
        styles = model.reference_styles(
            utt.features.frames, utt.durations, utt.text.word_ids
        )
        all_weights.append(styles.weights.detach().cpu().numpy())
    weights = np.concatenate(all_weights, axis=0).astype(np.float64)
    return TokenWeightStats(means=weights.mean(axis=0), stds=weights.std(axis=0))


def bias_embeddings(
    styles: WordStyleEmbeddings,
    token_id: int,
    amount_stds: float,
    bank_tokens: torch.Tensor,
    stats: TokenWeightStats,
    words: list[int] | None = None,
) -> WordStyleEmbeddings:
    """Shift selected word embeddings along one token's direction.

    ``words=None`` selects all words (global style control). The shift is
    ``amount_stds * std_token * token_vector``; the weights field is dropped
    because the result leaves the token simplex.
    """
    if not 0 <= token_id < stats.n_tokens:
        raise ValueError(f"token_id out of range: {token_id}")
    embeddings = styles.embeddings.clone()
    n_words = embeddings.shape[0]
    if words is None:
        selected = range(n_words)
    else:
        for w in words:
            if not 0 <= w < n_words:
                raise ValueError(f"word index out of range: {w}")
        selected = words
    scale = amount_stds * max(float(stats.stds[token_id]), STD_FLOOR)
    shift = scale * bank_tokens[token_id].detach().to(embeddings.dtype)
    for w in selected:
        embeddings[w] = embeddings[w] + shift
    return WordStyleEmbeddings(embeddings=embeddings, weights=None)


@torch.no_grad()
def style_transfer(
    model: WordStyleModel,
    source: Utterance,
    target_text: PhonemeSequence,
    alpha: float,
) -> WordStyleEmbeddings:
    """Blend source-audio styles into the prior styles of a target sentence.

    Words are matched by index; target words beyond the source length fall
    back to the prior embedding alone. ``alpha=1`` copies the source styles,
    ``alpha=0`` reduces to the prior.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    source_styles = model.reference_styles(
        source.features.frames, source.durations, source.text.word_ids
    )
    prior_styles = model.prior_styles(target_text)
    n_target = prior_styles.n_words
    n_matched = min(n_target, source_styles.n_words)

    embeddings = prior_styles.embeddings.clone()
    embeddings[:n_matched] = (
        alpha * source_styles.embeddings[:n_matched]
        + (1.0 - alpha) * prior_styles.embeddings[:n_matched]
    )
    return WordStyleEmbeddings(embeddings=embeddings, weights=None)
