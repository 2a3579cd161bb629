"""Text and reference encoders and the style token bank.

Three cooperating pieces produce the per-phoneme conditioning sequence:

* ``PhonemeEncoder``: embedding + convolution + bidirectional LSTM over the
  phoneme sequence.
* ``ReferenceSummarizer`` + ``StyleTokenBank``: summarizes each word's frame
  span into a fixed-length query, then attends over a bank of learnable style
  tokens; the softmax-weighted token combination is the word style embedding.
* ``WordSequenceEncoder``: a text-only per-word encoder behind a stop
  gradient, so the style embeddings are free to carry only style.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from . import inventory
from .corpus import PhonemeSequence, word_frame_spans


@dataclass
class WordStyleEmbeddings:
    """Per-word style embeddings; ``weights`` is None for biased or prior
    embeddings that no longer lie on the token simplex."""

    embeddings: torch.Tensor  # [n_words, d_token]
    weights: torch.Tensor | None = None  # [n_words, n_tokens]

    @property
    def n_words(self) -> int:
        return self.embeddings.shape[0]


def phoneme_indices(text: PhonemeSequence) -> torch.Tensor:
    return torch.tensor(
        [inventory.phoneme_to_index(p) for p in text.phonemes], dtype=torch.long
    )


def word_ids_tensor(word_ids) -> torch.Tensor:
    return torch.as_tensor(word_ids, dtype=torch.long)


def word_average(enc: torch.Tensor, word_ids) -> torch.Tensor:
    """Arithmetic mean of the encoding rows of each word."""
    wid = word_ids_tensor(word_ids).to(enc.device)
    if wid.numel() != enc.shape[0]:
        raise ValueError("one word id per encoding row required")
    n_words = int(wid[-1]) + 1
    sums = enc.new_zeros(n_words, enc.shape[1]).index_add_(0, wid, enc)
    counts = torch.bincount(wid, minlength=n_words).to(enc.dtype)
    return sums / counts.unsqueeze(1)


def pad_stack(rows: list[torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack variable-length [L_i, D] tensors into [B, Lmax, D] plus a
    boolean validity mask [B, Lmax]. Padding is zero."""
    lengths = [r.shape[0] for r in rows]
    out = rows[0].new_zeros(len(rows), max(lengths), rows[0].shape[1])
    mask = torch.zeros(len(rows), max(lengths), dtype=torch.bool, device=rows[0].device)
    for b, r in enumerate(rows):
        out[b, : r.shape[0]] = r
        mask[b, : r.shape[0]] = True
    return out, mask


def build_conditioning(
    enc: torch.Tensor,
    ws: torch.Tensor,
    style: torch.Tensor,
    word_ids,
) -> torch.Tensor:
    """Concatenate phoneme encodings with their word's sequence encoding and
    style embedding, replicated across the word's phonemes."""
    wid = word_ids_tensor(word_ids).to(enc.device)
    if wid.numel() != enc.shape[0]:
        raise ValueError("one word id per encoding row required")
    n_words = int(wid[-1]) + 1
    if ws.shape[0] != n_words or style.shape[0] != n_words:
        raise ValueError("word-level inputs must have one row per word")
    return torch.cat([enc, ws[wid], style[wid]], dim=1)


class PhonemeEncoder(nn.Module):
    """Embedding table, one convolution and one bidirectional LSTM."""

    def __init__(self, n_symbols: int = 40, d_enc: int = 64, kernel_size: int = 5):
        super().__init__()
        if d_enc % 2:
            raise ValueError("d_enc must be even")
        self.embedding = nn.Embedding(n_symbols, d_enc)
        self.conv = nn.Conv1d(d_enc, d_enc, kernel_size, padding=kernel_size // 2)
        self.lstm = nn.LSTM(d_enc, d_enc // 2, bidirectional=True, batch_first=True)

    def forward(self, indices: torch.Tensor) -> torch.Tensor:
        x = self.embedding(indices)
        x = torch.relu(self.conv(x.t().unsqueeze(0))).squeeze(0).t()
        out, _ = self.lstm(x.unsqueeze(0))
        return out.squeeze(0)

    def forward_batch(self, texts: list[PhonemeSequence]) -> list[torch.Tensor]:
        """Encode several sequences in one padded pass; each result equals the
        single-sequence ``forward`` on that text."""
        device = self.embedding.weight.device
        idx = [phoneme_indices(t).to(device) for t in texts]
        lengths = [i.shape[0] for i in idx]
        padded = torch.zeros(len(idx), max(lengths), dtype=torch.long, device=device)
        for b, i in enumerate(idx):
            padded[b, : i.shape[0]] = i
        x = self.embedding(padded)
        mask = (
            torch.arange(x.shape[1], device=device)[None, :]
            < torch.tensor(lengths, device=device)[:, None]
        )
        # Zero the pad positions so the convolution sees the same implicit
        # zero padding as the single-sequence path.
        x = x * mask.unsqueeze(-1)
        x = torch.relu(self.conv(x.transpose(1, 2))).transpose(1, 2)
        packed = pack_padded_sequence(
            x, torch.tensor(lengths, dtype=torch.int64), batch_first=True, enforce_sorted=False
        )
        out, _ = self.lstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True)
        return [out[b, :n] for b, n in enumerate(lengths)]

    def encode(self, text: PhonemeSequence) -> torch.Tensor:
        device = self.embedding.weight.device
        return self(phoneme_indices(text).to(device))


class ReferenceSummarizer(nn.Module):
    """Summarizes each word's frame span into a fixed-length query vector.

    Two convolutions over frames followed by a unidirectional GRU; the final
    GRU state is the summary. Words are processed on their own frame spans
    only, so there is no leakage across word boundaries.
    """

    def __init__(self, n_channels: int = 22, d_hidden: int = 64, d_ref: int = 128):
        super().__init__()
        self.conv1 = nn.Conv1d(n_channels, d_hidden, 3, padding=1)
        self.conv2 = nn.Conv1d(d_hidden, d_hidden, 3, padding=1)
        self.gru = nn.GRU(d_hidden, d_ref, batch_first=True)

    def forward(self, frames: torch.Tensor, durations, word_ids) -> torch.Tensor:
        spans = word_frame_spans(durations, word_ids)
        total = sum(int(d) for d in durations)
        if total != frames.shape[0]:
            raise ValueError(
                f"durations sum to {total} but features have {frames.shape[0]} frames"
            )
        lengths = [b - a for a, b in spans]
        if any(n < 1 for n in lengths):
            raise ValueError("every word must span at least one frame")

        padded = frames.new_zeros(len(spans), max(lengths), frames.shape[1])
        for w, (a, b) in enumerate(spans):
            padded[w, : b - a] = frames[a:b]
        x = padded.transpose(1, 2)
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        packed = pack_padded_sequence(
            x.transpose(1, 2),
            torch.tensor(lengths, dtype=torch.int64),
            batch_first=True,
            enforce_sorted=False,
        )
        _, h = self.gru(packed)
        return h.squeeze(0)


class StyleTokenBank(nn.Module):
    """Bank of learnable style tokens with scaled content-based attention."""

    def __init__(self, n_tokens: int = 15, d_token: int = 128, d_query: int = 128):
        super().__init__()
        init = torch.empty(n_tokens, d_token).uniform_(-0.5, 0.5) / d_token**0.5
        self.tokens = nn.Parameter(init)
        self.query_proj = nn.Linear(d_query, d_token, bias=False)
        self.key_proj = nn.Linear(d_token, d_token, bias=False)
        self.scale = d_token**-0.5

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    def attend(self, query: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Softmax attention over the bank.

        Accepts a single query vector or a matrix of queries; returns
        (weights, embeddings) where each embedding is the weighted average of
        the tokens.
        """
        single = query.dim() == 1
        if single:
            query = query.unsqueeze(0)
        scores = self.query_proj(query) @ self.key_proj(self.tokens).t() * self.scale
        weights = torch.softmax(scores, dim=-1)
        embeddings = weights @ self.tokens
        if single:
            return weights.squeeze(0), embeddings.squeeze(0)
        return weights, embeddings

    def forward(self, query: torch.Tensor):
        return self.attend(query)


class WordSequenceEncoder(nn.Module):
    """Per-word phonetic encoder: stop gradient, linear layer, word average,
    then a bidirectional LSTM over the word sequence."""

    def __init__(self, d_enc: int = 64, d_ws: int = 32):
        super().__init__()
        if d_ws % 2:
            raise ValueError("d_ws must be even")
        self.pre = nn.Linear(d_enc, d_ws)
        self.lstm = nn.LSTM(d_ws, d_ws // 2, bidirectional=True, batch_first=True)

    def forward(self, enc: torch.Tensor, word_ids) -> torch.Tensor:
        x = self.pre(enc.detach())
        avg = word_average(x, word_ids)
        out, _ = self.lstm(avg.unsqueeze(0))
        return out.squeeze(0)

    def forward_batch(
        self, encs: list[torch.Tensor], word_ids_list: list
    ) -> list[torch.Tensor]:
        """Batched variant; each result equals ``forward`` on that utterance."""
        avgs = [
            word_average(self.pre(enc.detach()), word_ids)
            for enc, word_ids in zip(encs, word_ids_list)
        ]
        lengths = [a.shape[0] for a in avgs]
        padded, _ = pad_stack(avgs)
        packed = pack_padded_sequence(
            padded,
            torch.tensor(lengths, dtype=torch.int64),
            batch_first=True,
            enforce_sorted=False,
        )
        out, _ = self.lstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True)
        return [out[b, :n] for b, n in enumerate(lengths)]
