"""Joint training: reconstruction + duration + prior losses, warmup/halving
learning-rate schedule, gradient-isolation audit and checkpointing.

Desk-scale defaults are sized for CPU runs on the synthetic corpus; the
full-scale configuration from which they shrink is batch_size=32,
warmup_steps=4000 and decay_steps=50000.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import LOSS_LOG_NAME, Checkpoint, save_checkpoint
from .control import compute_token_stats
from .corpus import Utterance
from .decoder import duration_target, gaussian_upsample
from .encoders import build_conditioning
from .model import ModelConfig, WordStyleModel


class GradientAuditError(RuntimeError):
    """A loss component leaked gradient across an isolation boundary."""


@dataclass
class TrainingConfig:
    batch_size: int = 8
    base_lr: float = 1e-3
    warmup_steps: int = 200
    decay_steps: int = 2000
    adam_betas: tuple[float, float] = (0.9, 0.999)
    l2_factor: float = 1e-6
    lambda_dur: float = 1.0
    lambda_prior: float = 1.0
    grad_clip: float = 1.0
    seed: int = 0
    max_steps: int = 2000
    snapshot_interval: int = 0

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        if min(self.batch_size, self.base_lr, self.warmup_steps, self.decay_steps) <= 0:
            raise ValueError("batch_size, base_lr, warmup_steps, decay_steps must be positive")
        if self.max_steps <= self.warmup_steps:
            raise ValueError("warmup_steps must be smaller than max_steps")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainingConfig":
        return cls(**payload)


@dataclass
class LossRow:
    step: int
    lr: float
    recon: float
    duration: float
    prior: float
    total: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[LossRow] = field(default_factory=list)

    @property
    def model(self) -> WordStyleModel:
        return self.checkpoint.model


def lr_schedule(step: int, config: TrainingConfig) -> float:
    """Linear ramp-up over the warmup, then halving every decay period."""
    ramp = min(step / config.warmup_steps, 1.0)
    halvings = max(step - config.warmup_steps, 0) // config.decay_steps
    return config.base_lr * ramp * 0.5**halvings


def utterance_losses(model: WordStyleModel, utterance: Utterance):
    """Reconstruction, duration and prior losses for one utterance.

    Reconstruction is MSE + MAE over the teacher-forced normalized frames;
    duration is squared error on log(1 + d); the prior loss is the MSE of the
    teacher-forced prior predictions against the (detached) reference
    embeddings.
    """
    text = utterance.text
    enc, ws = model.encode_text(text)
    styles = model.reference_styles(
        utterance.features.frames, utterance.durations, text.word_ids
    )
    cond = build_conditioning(enc, ws, styles.embeddings, text.word_ids)
    log_dur, sigma = model.duration_predictor(cond)

    upsampled = gaussian_upsample(cond, utterance.durations, sigma)
    target = model.normalize(utterance.features.frames)
    pred = model.frame_decoder(upsampled, teacher_frames=target)
    diff = pred - target
    recon = torch.mean(diff**2) + torch.mean(diff.abs())

    dur_target = duration_target(utterance.durations, dtype=log_dur.dtype)
    duration = torch.mean((log_dur - dur_target) ** 2)

    prior_in = model.prior_inputs(enc, ws, text.word_ids)
    _, prior_loss = model.prior.teacher_forced(prior_in, styles.embeddings)
    return recon, duration, prior_loss


def total_loss(
    model: WordStyleModel, batch: list[Utterance], config: TrainingConfig
) -> tuple[torch.Tensor, dict[str, float]]:
    """Batch loss: mean per-utterance components plus the L2 penalty.

    Runs the padded batch pass; the components equal the means of the
    per-utterance ``utterance_losses`` values.
    """
    if not batch:
        raise ValueError("empty batch")
    fwd = model.teacher_forced_batch(batch)
    n_channels = fwd.pred.shape[2]

    diff = fwd.pred - fwd.target
    fmask = fwd.frame_mask.unsqueeze(2).to(diff.dtype)
    values_per_utt = fwd.frame_mask.sum(dim=1).to(diff.dtype) * n_channels
    mse_per_utt = (diff.square() * fmask).sum(dim=(1, 2)) / values_per_utt
    mae_per_utt = (diff.abs() * fmask).sum(dim=(1, 2)) / values_per_utt
    recon = (mse_per_utt + mae_per_utt).mean()

    pmask = fwd.phoneme_mask.to(fwd.log_dur.dtype)
    dur_sq = (fwd.log_dur - fwd.dur_target).square() * pmask
    duration = (dur_sq.sum(dim=1) / pmask.sum(dim=1)).mean()

    prior_loss = fwd.prior_loss
    l2 = sum(p.square().sum() for p in model.parameters())
    total = (
        recon
        + config.lambda_dur * duration
        + config.lambda_prior * prior_loss
        + config.l2_factor * l2
    )
    components = {
        "recon": float(recon.detach()),
        "duration": float(duration.detach()),
        "prior": float(prior_loss.detach()),
        "total": float(total.detach()),
    }
    return total, components


def _leaky(named_parameters) -> list[str]:
    return [
        name
        for name, p in named_parameters
        if p.grad is not None and p.grad.abs().max() > 0
    ]


def gradient_audit(model: WordStyleModel, batch: list[Utterance]) -> None:
    """Verify the gradient-isolation contract at the current parameters.

    Raises GradientAuditError if the prior loss reaches any non-prior
    parameter, if the word-sequence-encoder path reaches the phoneme encoder,
    or if the total loss leaves any parameter without a finite gradient.
    """
    utterance = batch[0]
    text = utterance.text

    model.zero_grad(set_to_none=True)
    enc, ws = model.encode_text(text)
    styles = model.reference_styles(
        utterance.features.frames, utterance.durations, text.word_ids
    )
    prior_in = model.prior_inputs(enc, ws, text.word_ids)
    _, prior_loss = model.prior.teacher_forced(prior_in, styles.embeddings)
    prior_loss.backward()
    leaks = _leaky(model.non_prior_parameters())
    if leaks:
        raise GradientAuditError(f"prior loss leaked into: {', '.join(leaks)}")

    model.zero_grad(set_to_none=True)
    enc, ws = model.encode_text(text)
    ws.sum().backward()
    leaks = _leaky(
        (n, p) for n, p in model.named_parameters() if n.startswith("phoneme_encoder.")
    )
    if leaks:
        raise GradientAuditError(
            f"word sequence encoder leaked into phoneme encoder: {', '.join(leaks)}"
        )

    model.zero_grad(set_to_none=True)
    config = TrainingConfig()
    total, _ = total_loss(model, batch[: config.batch_size], config)
    total.backward()
    bad = [
        name
        for name, p in model.named_parameters()
        if p.grad is None or not torch.isfinite(p.grad).all()
    ]
    if bad:
        raise GradientAuditError(f"missing or non-finite gradients for: {', '.join(bad)}")
    model.zero_grad(set_to_none=True)


def _feature_stats(utterances: list[Utterance]) -> tuple[np.ndarray, np.ndarray]:
    frames = np.concatenate([u.features.frames for u in utterances], axis=0)
    frames = frames.astype(np.float64)
    return frames.mean(axis=0), frames.std(axis=0)


def write_loss_log(path, history: list[LossRow]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("step,lr,recon,duration,prior,total\n")
        for row in history:
            f.write(
                f"{row.step},{row.lr:.8g},{row.recon:.8g},{row.duration:.8g},"
                f"{row.prior:.8g},{row.total:.8g}\n"
            )


def train(
    utterances: list[Utterance],
    config: TrainingConfig = TrainingConfig(),
    model_config: ModelConfig | None = None,
    out_dir=None,
) -> TrainResult:
    """Train all components jointly; deterministic given the seed.

    Writes the checkpoint (with token stats over the training corpus) and the
    loss log to ``out_dir`` when given. Aborts on a non-finite loss, naming
    the offending step.
    """
    if not utterances:
        raise ValueError("empty corpus")
    torch.manual_seed(config.seed)
    model = WordStyleModel(model_config or ModelConfig())
    model.set_feature_stats(*_feature_stats(utterances))
    gradient_audit(model, utterances[: config.batch_size])

    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.base_lr, betas=config.adam_betas
    )
    rng = np.random.default_rng(config.seed)
    order: list[int] = []
    history: list[LossRow] = []

    model.train()
    for step in range(1, config.max_steps + 1):
        if len(order) < config.batch_size:
            order.extend(int(i) for i in rng.permutation(len(utterances)))
        batch = [utterances[order.pop(0)] for _ in range(config.batch_size)]

        lr = lr_schedule(step, config)
        for group in optimizer.param_groups:
            group["lr"] = lr
        total, components = total_loss(model, batch, config)
        if not torch.isfinite(total):
            raise RuntimeError(f"non-finite loss at step {step}")
        optimizer.zero_grad(set_to_none=True)
        total.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
        optimizer.step()
        history.append(
            LossRow(
                step=step,
                lr=lr,
                recon=components["recon"],
                duration=components["duration"],
                prior=components["prior"],
                total=components["total"],
            )
        )
        if (
            out_dir is not None
            and config.snapshot_interval > 0
            and step % config.snapshot_interval == 0
            and step < config.max_steps
        ):
            snapshot_dir = Path(out_dir) / "snapshots" / f"step_{step:06d}"
            save_checkpoint(snapshot_dir, model, step, config.to_dict())

    model.eval()
    token_stats = compute_token_stats(model, utterances)
    checkpoint = Checkpoint(
        model=model,
        step=config.max_steps,
        train_config=config.to_dict(),
        token_stats=token_stats,
    )
    if out_dir is not None:
        save_checkpoint(out_dir, model, config.max_steps, config.to_dict(), token_stats)
        write_loss_log(Path(out_dir) / LOSS_LOG_NAME, history)
    return TrainResult(checkpoint=checkpoint, history=history)
