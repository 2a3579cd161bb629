import dataclasses

import numpy as np
import pytest
import torch

from wordstyle.checkpoint import load_checkpoint
from wordstyle.model import WordStyleModel
from wordstyle.training import (
    GradientAuditError,
    TrainingConfig,
    gradient_audit,
    lr_schedule,
    total_loss,
    train,
    utterance_losses,
    write_loss_log,
)

CFG = TrainingConfig()


class TestTrainingConfig:
    def test_round_trip_through_dict(self):
        cfg = TrainingConfig(batch_size=4, seed=9, max_steps=50, warmup_steps=10)
        assert TrainingConfig.from_dict(cfg.to_dict()) == cfg

    def test_nonpositive_values_rejected(self):
        with pytest.raises(ValueError):
            TrainingConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainingConfig(base_lr=0.0)

    def test_warmup_must_precede_max_steps(self):
        with pytest.raises(ValueError):
            TrainingConfig(warmup_steps=100, max_steps=100)


class TestLrSchedule:
    def test_zero_at_step_zero(self):
        assert lr_schedule(0, CFG) == 0.0

    def test_base_rate_at_warmup_end(self):
        assert lr_schedule(CFG.warmup_steps, CFG) == CFG.base_lr

    def test_linear_ramp_midpoint(self):
        assert lr_schedule(CFG.warmup_steps // 2, CFG) == pytest.approx(
            CFG.base_lr / 2
        )

    def test_quartered_after_two_decay_periods(self):
        step = CFG.warmup_steps + 2 * CFG.decay_steps
        assert lr_schedule(step, CFG) == pytest.approx(CFG.base_lr / 4)

    def test_halving_boundary(self):
        before = CFG.warmup_steps + CFG.decay_steps - 1
        after = CFG.warmup_steps + CFG.decay_steps
        assert lr_schedule(before, CFG) == CFG.base_lr
        assert lr_schedule(after, CFG) == CFG.base_lr / 2

    def test_never_increases_after_warmup(self):
        values = [lr_schedule(s, CFG) for s in range(CFG.warmup_steps, 8000)]
        assert all(b <= a for a, b in zip(values, values[1:]))


@pytest.fixture(scope="module")
def model_and_batch(toy_corpus):
    _, utterances = toy_corpus
    torch.manual_seed(0)
    model = WordStyleModel()
    frames = np.concatenate([u.features.frames for u in utterances]).astype(np.float64)
    model.set_feature_stats(frames.mean(axis=0), frames.std(axis=0))
    return model, utterances[:4]


class TestTotalLoss:
    def test_total_is_sum_of_weighted_components_plus_l2(self, model_and_batch):
        model, batch = model_and_batch
        model.eval()
        cfg = TrainingConfig(lambda_dur=0.7, lambda_prior=0.3)
        total, parts = total_loss(model, batch, cfg)
        with torch.no_grad():
            l2 = sum(float(p.square().sum()) for p in model.parameters())
        expected = (
            parts["recon"]
            + 0.7 * parts["duration"]
            + 0.3 * parts["prior"]
            + cfg.l2_factor * l2
        )
        assert float(total.detach()) == pytest.approx(expected, rel=1e-6)

    def test_batched_components_match_per_utterance_means(self, model_and_batch):
        model, batch = model_and_batch
        model.eval()
        _, parts = total_loss(model, batch, CFG)
        with torch.no_grad():
            per = [utterance_losses(model, u) for u in batch]
        assert parts["recon"] == pytest.approx(
            np.mean([float(r) for r, _, _ in per]), abs=1e-5
        )
        assert parts["duration"] == pytest.approx(
            np.mean([float(d) for _, d, _ in per]), abs=1e-6
        )
        assert parts["prior"] == pytest.approx(
            np.mean([float(p) for _, _, p in per]), abs=1e-6
        )

    def test_empty_batch_rejected(self, model_and_batch):
        model, _ = model_and_batch
        with pytest.raises(ValueError, match="empty"):
            total_loss(model, [], CFG)

    def grads_for(self, model, batch, cfg):
        model.zero_grad(set_to_none=True)
        total, _ = total_loss(model, batch, cfg)
        total.backward()
        grads = {
            n: (p.grad.clone() if p.grad is not None else None)
            for n, p in model.named_parameters()
        }
        model.zero_grad(set_to_none=True)
        return grads

    def test_prior_weight_zero_leaves_non_prior_gradients_unchanged(
        self, model_and_batch
    ):
        model, batch = model_and_batch
        model.eval()
        with_prior = self.grads_for(model, batch, TrainingConfig(lambda_prior=1.0))
        without = self.grads_for(model, batch, TrainingConfig(lambda_prior=0.0))
        for name, _ in model.non_prior_parameters():
            assert torch.equal(with_prior[name], without[name]), name

    def test_duration_weight_zero_changes_only_duration_gradients(
        self, model_and_batch
    ):
        model, batch = model_and_batch
        model.eval()
        with_dur = self.grads_for(model, batch, TrainingConfig(lambda_dur=1.0))
        without = self.grads_for(model, batch, TrainingConfig(lambda_dur=0.0))
        changed = [
            n
            for n in with_dur
            if not torch.allclose(with_dur[n], without[n], atol=1e-9)
        ]
        assert changed
        # The frame decoder and prior sit downstream/parallel to the duration
        # head, so removing the duration loss cannot touch them.
        assert not [n for n in changed if n.startswith(("frame_decoder.", "prior."))]


class TestGradientAudit:
    def test_fresh_model_passes(self, model_and_batch):
        model, batch = model_and_batch
        gradient_audit(model, batch)

    def test_detects_prior_leak(self, model_and_batch, monkeypatch):
        model, batch = model_and_batch
        # Sabotage the stop gradient on the prior inputs.
        def leaky_inputs(enc, ws, word_ids):
            from wordstyle.encoders import word_average

            return torch.cat([word_average(enc, word_ids), ws], dim=1)

        monkeypatch.setattr(model, "prior_inputs", leaky_inputs)
        with pytest.raises(GradientAuditError, match="prior loss leaked"):
            gradient_audit(model, batch)


class TestTrain:
    def test_result_reproducible_across_runs(self, toy_corpus):
        _, utterances = toy_corpus
        cfg = TrainingConfig(batch_size=4, max_steps=25, warmup_steps=10, seed=7)
        r1 = train(utterances[:8], cfg)
        r2 = train(utterances[:8], cfg)
        assert [dataclasses.astuple(a) for a in r1.history] == [
            dataclasses.astuple(b) for b in r2.history
        ]
        p1 = dict(r1.model.named_parameters())
        for name, p2 in r2.model.named_parameters():
            assert torch.equal(p1[name], p2)

    def test_different_seed_changes_losses(self, toy_corpus):
        _, utterances = toy_corpus
        base = dict(batch_size=4, max_steps=12, warmup_steps=5)
        r1 = train(utterances[:8], TrainingConfig(seed=1, **base))
        r2 = train(utterances[:8], TrainingConfig(seed=2, **base))
        assert r1.history[-1].total != r2.history[-1].total

    def test_loss_decreases_on_tiny_run(self, tiny_train):
        _, result = tiny_train
        first = np.mean([r.recon for r in result.history[:5]])
        last = np.mean([r.recon for r in result.history[-5:]])
        assert last < first

    def test_history_rows_carry_schedule(self, tiny_train):
        _, result = tiny_train
        cfg = TrainingConfig.from_dict(result.checkpoint.train_config)
        assert [r.step for r in result.history] == list(
            range(1, cfg.max_steps + 1)
        )
        for row in result.history:
            assert row.lr == lr_schedule(row.step, cfg)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train([], TrainingConfig(max_steps=5, warmup_steps=1))

    def test_non_finite_loss_aborts_with_step_number(self, toy_corpus, monkeypatch):
        _, utterances = toy_corpus
        real = total_loss
        calls = {"n": 0}

        def poisoned(model, batch, config):
            calls["n"] += 1
            if calls["n"] == 1:  # keep the pre-training gradient audit intact
                return real(model, batch, config)
            return torch.tensor(float("nan"), requires_grad=True), {
                "recon": float("nan"),
                "duration": 0.0,
                "prior": 0.0,
                "total": float("nan"),
            }

        monkeypatch.setattr("wordstyle.training.total_loss", poisoned)
        with pytest.raises(RuntimeError, match="step 1"):
            train(
                utterances[:4],
                TrainingConfig(batch_size=2, max_steps=5, warmup_steps=1),
            )

    def test_outputs_written_to_disk(self, tiny_train):
        out_dir, result = tiny_train
        assert (out_dir / "params.bin").is_file()
        assert (out_dir / "config.json").is_file()
        assert (out_dir / "token_stats.json").is_file()
        lines = (out_dir / "loss_log.csv").read_text().splitlines()
        assert lines[0] == "step,lr,recon,duration,prior,total"
        assert len(lines) == 1 + len(result.history)

    def test_snapshots_written_at_interval(self, toy_corpus, tmp_path):
        _, utterances = toy_corpus
        cfg = TrainingConfig(
            batch_size=4, max_steps=10, warmup_steps=2, snapshot_interval=4
        )
        train(utterances[:8], cfg, out_dir=tmp_path)
        snaps = sorted(p.name for p in (tmp_path / "snapshots").iterdir())
        assert snaps == ["step_000004", "step_000008"]
        snap = load_checkpoint(tmp_path / "snapshots" / "step_000004")
        assert snap.step == 4

    def test_loss_log_round_trips_through_csv(self, tiny_train, tmp_path):
        _, result = tiny_train
        path = tmp_path / "log.csv"
        write_loss_log(path, result.history)
        rows = path.read_text().splitlines()[1:]
        assert len(rows) == len(result.history)
        first = rows[0].split(",")
        assert int(first[0]) == result.history[0].step
        assert float(first[2]) == pytest.approx(result.history[0].recon, rel=1e-6)
