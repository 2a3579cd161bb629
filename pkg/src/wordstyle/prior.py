"""Autoregressive prediction of word style embeddings from text alone.

The prior consumes per-word text features (word-averaged phoneme encodings
concatenated with word sequence encodings, both stop-gradient-protected) and
predicts each word style embedding from the text and all previous embeddings.
During training the previous embedding is the reference-derived target
(teacher forcing); at inference predictions are fed back. Its loss is the MSE
against the reference embeddings, i.e. a unit-variance Gaussian likelihood up
to constants, and it never updates the rest of the model.
"""

from __future__ import annotations

import torch
from torch import nn


class PriorEncoder(nn.Module):
    def __init__(self, d_in: int, d_token: int = 128, d_hidden: int = 256):
        super().__init__()
        self.d_token = d_token
        self.cell = nn.GRUCell(d_in + d_token, d_hidden)
        self.proj = nn.Linear(d_hidden, d_token)

    def _step(self, inputs_w, prev_embedding, state):
        x = torch.cat([inputs_w, prev_embedding]).unsqueeze(0)
        state = self.cell(x, state)
        return self.proj(state).squeeze(0), state

    def _initial(self, inputs):
        state = inputs.new_zeros(1, self.cell.hidden_size)
        prev = inputs.new_zeros(self.d_token)
        return prev, state

    def teacher_forced(
        self, inputs: torch.Tensor, targets: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Predict each embedding from the text and the previous targets.

        Targets are detached: they are loss targets and must not receive
        gradient from the prior loss.
        """
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs and targets must have one row per word")
        targets = targets.detach()
        prev, state = self._initial(inputs)
        preds = []
        for w in range(inputs.shape[0]):
            pred, state = self._step(inputs[w], prev, state)
            preds.append(pred)
            prev = targets[w]
        predictions = torch.stack(preds)
        loss = torch.mean((predictions - targets) ** 2)
        return predictions, loss

    def generate(self, inputs: torch.Tensor) -> torch.Tensor:
        """Generate embeddings autoregressively, feeding predictions back."""
        prev, state = self._initial(inputs)
        preds = []
        for w in range(inputs.shape[0]):
            pred, state = self._step(inputs[w], prev, state)
            preds.append(pred)
            prev = pred
        return torch.stack(preds)
