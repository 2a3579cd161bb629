"""Non-attentive decoding: duration prediction, Gaussian upsampling and
autoregressive frame reconstruction.

Alignment is fully determined by per-phoneme durations, so the output length
always equals the duration sum and repeat/omit failures cannot occur. During
training the ground-truth durations drive the upsampling while the predictor
is trained against log(1 + duration); at inference the predicted durations
are decoded and used instead.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

SIGMA_FLOOR = 1e-3


def duration_target(durations, dtype: torch.dtype | None = None) -> torch.Tensor:
    """Regression target log(1 + d) for integer frame durations."""
    d = torch.as_tensor(durations, dtype=dtype or torch.get_default_dtype())
    return torch.log1p(d)


def decode_durations(log_durations: torch.Tensor) -> list[int]:
    """Integer durations from predicted log(1 + d) values.

    Rounds exp(l) - 1 and clamps at 0; if every phoneme decodes to 0, the
    phoneme with the largest prediction is floored to 1 frame so the total is
    always >= 1.
    """
    d = torch.clamp(torch.round(torch.expm1(log_durations)), min=0.0)
    out = [int(v) for v in d.tolist()]
    if sum(out) == 0:
        out[int(torch.argmax(log_durations))] = 1
    return out


class DurationPredictor(nn.Module):
    """Per-phoneme (log-duration, range) predictor over the conditioning.

    The range parameter sigma is the Gaussian upsampling width in frames,
    kept positive through a softplus; a fixed-sigma mode is available as a
    configuration fallback.
    """

    def __init__(self, d_cond: int, d_hidden: int = 64, fixed_sigma: float | None = None):
        super().__init__()
        self.gru = nn.GRU(d_cond, d_hidden, bidirectional=True, batch_first=True)
        self.proj = nn.Linear(2 * d_hidden, 2)
        self.fixed_sigma = fixed_sigma

    def forward(self, cond: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out, _ = self.gru(cond.unsqueeze(0))
        raw = self.proj(out.squeeze(0))
        return self._split(raw)

    def forward_batch(
        self, conds: list[torch.Tensor]
    ) -> list[tuple[torch.Tensor, torch.Tensor]]:
        """Batched variant; each result equals ``forward`` on that sequence."""
        from .encoders import pad_stack

        lengths = [c.shape[0] for c in conds]
        padded, _ = pad_stack(conds)
        packed = pack_padded_sequence(
            padded,
            torch.tensor(lengths, dtype=torch.int64),
            batch_first=True,
            enforce_sorted=False,
        )
        out, _ = self.gru(packed)
        out, _ = pad_packed_sequence(out, batch_first=True)
        raw = self.proj(out)
        return [self._split(raw[b, :n]) for b, n in enumerate(lengths)]

    def _split(self, raw: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        log_dur = raw[..., 0]
        if self.fixed_sigma is not None:
            sigma = torch.full_like(log_dur, self.fixed_sigma)
        else:
            sigma = nn.functional.softplus(raw[..., 1]) + SIGMA_FLOOR
        return log_dur, sigma


def gaussian_upsample_weights(durations, sigmas: torch.Tensor) -> torch.Tensor:
    """Frame-to-phoneme weight matrix [T x n] of the Gaussian upsampling.

    Phoneme i is centered at its temporal midpoint c_i = cumsum(d)_i - d_i/2;
    frame t weights each phoneme by a Gaussian in (t + 0.5 - c_i) with width
    sigma_i, normalized over phonemes. Rows therefore sum to 1 and the frame
    count equals the duration sum exactly.
    """
    d = torch.as_tensor(durations, dtype=sigmas.dtype, device=sigmas.device)
    if d.dim() != 1 or d.shape != sigmas.shape:
        raise ValueError("durations and sigmas must be matching vectors")
    if (d < 0).any():
        raise ValueError("durations must be non-negative")
    if (sigmas <= 0).any():
        raise ValueError("sigmas must be positive")
    total = int(d.sum().item())
    if total < 1:
        raise ValueError("duration sum must be >= 1")
    centers = torch.cumsum(d, dim=0) - d / 2
    t = torch.arange(total, dtype=sigmas.dtype, device=sigmas.device) + 0.5
    scores = -((t.unsqueeze(1) - centers.unsqueeze(0)) ** 2) / (2 * sigmas**2)
    return torch.softmax(scores, dim=1)


def gaussian_upsample(cond: torch.Tensor, durations, sigmas: torch.Tensor) -> torch.Tensor:
    """Expand per-phoneme conditioning rows to frame rate."""
    weights = gaussian_upsample_weights(durations, sigmas)
    return weights @ cond


class FrameDecoder(nn.Module):
    """Autoregressive frame decoder: prenet over the previous frame, a GRU
    over (prenet output, upsampled conditioning), and a linear projection of
    the recurrent state concatenated with the conditioning.

    Two guards keep the decoder from short-circuiting the conditioning
    pathway under teacher forcing. The prenet carries heavy train-time
    dropout, and only the first ``prenet_channels`` feature channels of the
    previous frame are fed back at all. The trailing channels (pitch period,
    voicing correlation) are constant over long stretches, so a decoder that
    sees them in the previous ground-truth frame can satisfy the training
    loss by copying and never learns to supply them from the conditioning
    for free-running synthesis. With the feedback restricted to the
    fast-moving cepstral channels, the slow channels can only come from the
    conditioning, which also gets a direct path into the projection.
    """

    def __init__(
        self,
        d_cond: int,
        n_channels: int = 22,
        d_prenet: int = 128,
        d_hidden: int = 256,
        prenet_dropout: float = 0.5,
        prenet_channels: int | None = None,
    ):
        super().__init__()
        self.n_channels = n_channels
        self.prenet_channels = (
            n_channels if prenet_channels is None else prenet_channels
        )
        if not 1 <= self.prenet_channels <= n_channels:
            raise ValueError("prenet_channels must be in [1, n_channels]")
        self.prenet = nn.Sequential(
            nn.Linear(self.prenet_channels, d_prenet),
            nn.ReLU(),
            nn.Dropout(prenet_dropout),
            nn.Linear(d_prenet, d_prenet),
            nn.ReLU(),
            nn.Dropout(prenet_dropout),
        )
        self.gru = nn.GRU(d_prenet + d_cond, d_hidden, batch_first=True)
        self.proj = nn.Linear(d_hidden + d_cond, n_channels)

    def forward(
        self, upsampled: torch.Tensor, teacher_frames: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Decode exactly one frame per upsampled row.

        With ``teacher_frames`` the previous ground-truth frame feeds the
        prenet (training); otherwise the decoder feeds its own output back.
        The initial previous frame is all zeros either way.
        """
        total = upsampled.shape[0]
        if total < 1:
            raise ValueError("upsampled conditioning must have at least one row")
        if teacher_frames is not None:
            if teacher_frames.shape[0] != total:
                raise ValueError(
                    f"teacher frames ({teacher_frames.shape[0]}) must match "
                    f"upsampled length ({total})"
                )
            prev = torch.cat(
                [upsampled.new_zeros(1, self.n_channels), teacher_frames[:-1]], dim=0
            )
            x = torch.cat([self.prenet(prev[:, : self.prenet_channels]), upsampled], dim=1)
            out, _ = self.gru(x.unsqueeze(0))
            return self.proj(torch.cat([out.squeeze(0), upsampled], dim=1))

        prev = upsampled.new_zeros(self.n_channels)
        state = None
        frames = []
        for t in range(total):
            x = torch.cat(
                [self.prenet(prev[: self.prenet_channels]), upsampled[t]]
            ).view(1, 1, -1)
            out, state = self.gru(x, state)
            prev = self.proj(torch.cat([out.view(-1), upsampled[t]]))
            frames.append(prev)
        return torch.stack(frames)

    def forward_batch(
        self, upsampled: list[torch.Tensor], teacher_frames: list[torch.Tensor]
    ) -> list[torch.Tensor]:
        """Teacher-forced decoding of several utterances in one padded pass;
        each result equals the single-utterance ``forward``."""
        from .encoders import pad_stack

        lengths = [u.shape[0] for u in upsampled]
        shifted = [
            torch.cat([t.new_zeros(1, self.n_channels), t[:-1]], dim=0)
            for t in teacher_frames
        ]
        up_pad, _ = pad_stack(upsampled)
        prev_pad, _ = pad_stack(shifted)
        x = torch.cat(
            [self.prenet(prev_pad[:, :, : self.prenet_channels]), up_pad], dim=2
        )
        out, _ = self.gru(x)
        out = self.proj(torch.cat([out, up_pad], dim=2))
        return [out[b, :n] for b, n in enumerate(lengths)]
