"""Full model: three encoders, duration predictor, decoder and the prior.

Feature matrices cross the model boundary in physical units; internally the
model works on per-channel normalized frames (the pitch period channel is two
orders of magnitude larger than the cepstra). The normalization statistics
are buffers, so they travel with the checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .corpus import N_CHANNELS, PhonemeSequence, Utterance
from .decoder import (
    DurationPredictor,
    FrameDecoder,
    decode_durations,
    duration_target,
    gaussian_upsample,
)
from .encoders import (
    PhonemeEncoder,
    ReferenceSummarizer,
    StyleTokenBank,
    WordSequenceEncoder,
    WordStyleEmbeddings,
    build_conditioning,
    pad_stack,
    word_average,
)
from .prior import PriorEncoder


@dataclass
class ModelConfig:
    n_symbols: int = 40
    d_enc: int = 64
    d_ws: int = 32
    d_ref: int = 128
    n_tokens: int = 15
    d_token: int = 128
    d_prior: int = 256
    d_duration: int = 64
    d_decoder: int = 256
    d_prenet: int = 128
    prenet_dropout: float = 0.5
    # Only the leading (cepstral) channels of the previous frame feed the
    # decoder prenet; the slow prosodic channels must come from conditioning.
    prenet_channels: int = 20
    fixed_sigma: float | None = None

    @property
    def d_cond(self) -> int:
        return self.d_enc + self.d_ws + self.d_token


@dataclass
class SynthesisResult:
    """Synthesized features in physical units plus the durations used."""

    features: np.ndarray  # [n_frames, 22] float32
    durations: list[int] = field(default_factory=list)
    log_durations: np.ndarray | None = None


@dataclass
class BatchTeacherForward:
    """Padded outputs of a batched teacher-forced pass (normalized space)."""

    pred: torch.Tensor  # [B, Tmax, n_channels]
    target: torch.Tensor  # [B, Tmax, n_channels]
    frame_mask: torch.Tensor  # [B, Tmax] bool
    log_dur: torch.Tensor  # [B, Pmax]
    dur_target: torch.Tensor  # [B, Pmax]
    phoneme_mask: torch.Tensor  # [B, Pmax] bool
    prior_loss: torch.Tensor  # scalar


class WordStyleModel(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        self.phoneme_encoder = PhonemeEncoder(config.n_symbols, config.d_enc)
        self.summarizer = ReferenceSummarizer(N_CHANNELS, d_ref=config.d_ref)
        self.token_bank = StyleTokenBank(config.n_tokens, config.d_token, config.d_ref)
        self.word_seq_encoder = WordSequenceEncoder(config.d_enc, config.d_ws)
        self.prior = PriorEncoder(
            config.d_enc + config.d_ws, config.d_token, config.d_prior
        )
        self.duration_predictor = DurationPredictor(
            config.d_cond, config.d_duration, config.fixed_sigma
        )
        self.frame_decoder = FrameDecoder(
            config.d_cond,
            N_CHANNELS,
            config.d_prenet,
            config.d_decoder,
            config.prenet_dropout,
            config.prenet_channels,
        )
        self.register_buffer("feat_mean", torch.zeros(N_CHANNELS))
        self.register_buffer("feat_std", torch.ones(N_CHANNELS))

    # -- feature normalization ------------------------------------------------

    def set_feature_stats(self, mean: np.ndarray, std: np.ndarray) -> None:
        dtype = self.feat_mean.dtype
        self.feat_mean.copy_(torch.as_tensor(mean, dtype=dtype))
        self.feat_std.copy_(torch.as_tensor(std, dtype=dtype).clamp_min(1e-6))

    def normalize(self, frames) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(frames), dtype=self.feat_mean.dtype)
        return (x - self.feat_mean) / self.feat_std

    def denormalize(self, frames: torch.Tensor) -> np.ndarray:
        x = frames * self.feat_std + self.feat_mean
        return x.detach().cpu().numpy().astype(np.float32)

    # -- encoders ------------------------------------------------------------

    def encode_text(self, text: PhonemeSequence) -> tuple[torch.Tensor, torch.Tensor]:
        enc = self.phoneme_encoder.encode(text)
        ws = self.word_seq_encoder(enc, text.word_ids)
        return enc, ws

    def reference_styles(self, features, durations, word_ids) -> WordStyleEmbeddings:
        """Style embeddings attended from the reference audio, one per word."""
        frames = self.normalize(features)
        queries = self.summarizer(frames, durations, word_ids)
        weights, embeddings = self.token_bank.attend(queries)
        return WordStyleEmbeddings(embeddings=embeddings, weights=weights)

    def prior_inputs(self, enc: torch.Tensor, ws: torch.Tensor, word_ids) -> torch.Tensor:
        """Per-word text features for the prior; stop-gradient-protected so
        the prior loss never reaches the other encoders."""
        return torch.cat([word_average(enc, word_ids), ws], dim=1).detach()

    @torch.no_grad()
    def prior_styles(self, text: PhonemeSequence) -> WordStyleEmbeddings:
        """Reference-free style embeddings generated by the prior."""
        enc, ws = self.encode_text(text)
        embeddings = self.prior.generate(self.prior_inputs(enc, ws, text.word_ids))
        return WordStyleEmbeddings(embeddings=embeddings, weights=None)

    def conditioning(
        self, text: PhonemeSequence, styles: WordStyleEmbeddings
    ) -> torch.Tensor:
        enc, ws = self.encode_text(text)
        return build_conditioning(enc, ws, styles.embeddings, text.word_ids)

    # -- decoding ------------------------------------------------------------

    def teacher_forced(self, utterance: Utterance, styles: WordStyleEmbeddings | None = None):
        """Training-mode forward pass with ground-truth durations and frames.

        Returns (predicted frames, target frames, predicted log-durations,
        sigmas, styles), everything in normalized feature space.
        """
        text = utterance.text
        if styles is None:
            styles = self.reference_styles(
                utterance.features.frames, utterance.durations, text.word_ids
            )
        cond = self.conditioning(text, styles)
        log_dur, sigma = self.duration_predictor(cond)
        upsampled = gaussian_upsample(cond, utterance.durations, sigma)
        target = self.normalize(utterance.features.frames)
        pred = self.frame_decoder(upsampled, teacher_frames=target)
        return pred, target, log_dur, sigma, styles

    def teacher_forced_batch(self, utterances: list[Utterance]) -> "BatchTeacherForward":
        """Teacher-forced pass over several utterances using padded batches.

        Equivalent to running ``teacher_forced`` per utterance (up to GEMM
        batching order), but several times faster on CPU, which is what the
        training loop cares about.
        """
        texts = [u.text for u in utterances]
        encs = self.phoneme_encoder.forward_batch(texts)
        wss = self.word_seq_encoder.forward_batch(encs, [t.word_ids for t in texts])

        # One summarizer/attention pass over every word in the batch: the
        # utterances are concatenated end to end with re-based word ids, which
        # yields exactly the per-word frame spans of the individual passes.
        frame_counts = [u.features.frames.shape[0] for u in utterances]
        frames_cat = self.normalize(
            np.concatenate([u.features.frames for u in utterances])
        )
        durations_cat = [d for u in utterances for d in u.durations]
        word_ids_cat: list[int] = []
        offset = 0
        for t in texts:
            word_ids_cat.extend(w + offset for w in t.word_ids)
            offset += t.n_words
        queries = self.summarizer(frames_cat, durations_cat, word_ids_cat)
        _, emb_cat = self.token_bank.attend(queries)
        style_embs = emb_cat.split([t.n_words for t in texts])

        conds, prior_losses = [], []
        for text, enc, ws, styles in zip(texts, encs, wss, style_embs):
            conds.append(build_conditioning(enc, ws, styles, text.word_ids))
            inputs = self.prior_inputs(enc, ws, text.word_ids)
            _, p_loss = self.prior.teacher_forced(inputs, styles)
            prior_losses.append(p_loss)

        dur_out = self.duration_predictor.forward_batch(conds)
        log_dur, phoneme_mask = pad_stack([ld.unsqueeze(1) for ld, _ in dur_out])
        log_dur = log_dur.squeeze(2)
        dur_target_pad, _ = pad_stack(
            [
                duration_target(u.durations, dtype=log_dur.dtype).unsqueeze(1)
                for u in utterances
            ]
        )

        targets = list(frames_cat.split(frame_counts))
        ups = [
            gaussian_upsample(cond, u.durations, sigma)
            for cond, u, (_, sigma) in zip(conds, utterances, dur_out)
        ]
        preds = self.frame_decoder.forward_batch(ups, targets)
        pred_pad, frame_mask = pad_stack(preds)
        target_pad, _ = pad_stack(targets)

        return BatchTeacherForward(
            pred=pred_pad,
            target=target_pad,
            frame_mask=frame_mask,
            log_dur=log_dur,
            dur_target=dur_target_pad.squeeze(2),
            phoneme_mask=phoneme_mask,
            prior_loss=torch.stack(prior_losses).mean(),
        )

    @torch.no_grad()
    def synthesize(
        self,
        text: PhonemeSequence,
        styles: WordStyleEmbeddings,
        durations: list[int] | None = None,
    ) -> SynthesisResult:
        """Inference: predict durations (unless given), upsample, decode."""
        cond = self.conditioning(text, styles)
        log_dur, sigma = self.duration_predictor(cond)
        if durations is None:
            durations = decode_durations(log_dur)
        upsampled = gaussian_upsample(cond, durations, sigma)
        frames = self.frame_decoder(upsampled)
        return SynthesisResult(
            features=self.denormalize(frames),
            durations=list(durations),
            log_durations=log_dur.detach().cpu().numpy(),
        )

    @torch.no_grad()
    def predicted_duration_total(self, text: PhonemeSequence, styles: WordStyleEmbeddings) -> float:
        """Continuous total predicted duration, sum of exp(log-duration)."""
        cond = self.conditioning(text, styles)
        log_dur, _ = self.duration_predictor(cond)
        return float(torch.exp(log_dur).sum())

    def non_prior_parameters(self):
        """Named parameters of everything except the prior encoder."""
        return [
            (name, p)
            for name, p in self.named_parameters()
            if not name.startswith("prior.")
        ]
