"""Slot-based recurrent unit: a Q x d slot memory updated additively at the
cursor slot, read out through a latent-attention mechanism.

State update (function ``m``)::

    C' = C + delta_p @ omega^T          # add omega to row p, other rows untouched

Readout (function ``g``), with trained diagonals D1/D2, latent rows L, a
relative-position table P and scale alpha::

    C_pos = alpha * C' + Dropout(P(p))  # row q of P(p) = table[clamp(q - p)]
    A     = Dropout(L) @ diag(D2) @ C_pos^T
    s_q   = max_j A[j, q]
    w     = softmax(s)
    h     = w^T @ (C' @ diag(D1))
"""

from __future__ import annotations

import torch
from torch import nn

from .config import SruConfig


def sru_update(state: torch.Tensor, omega: torch.Tensor, p: int) -> torch.Tensor:
    """Return a new state equal to ``state`` with ``omega`` added to row ``p``."""
    q = state.shape[0]
    if not 0 <= p < q:
        raise IndexError(f"slot index {p} out of range for {q} slots")
    index = torch.tensor([p], dtype=torch.long, device=state.device)
    return state.index_add(0, index, omega.unsqueeze(0))


def relative_position_rows(p: int, q: int, half_context: int, table: torch.Tensor) -> torch.Tensor:
    """Row i is the table entry for distance i - p, clamped to +/- half_context."""
    if table.shape[0] != 2 * half_context + 1:
        raise ValueError(
            f"table has {table.shape[0]} rows, expected {2 * half_context + 1}"
        )
    distances = torch.arange(q, device=table.device) - p
    idx = distances.clamp(-half_context, half_context) + half_context
    return table[idx]


class SlotRecurrentUnit(nn.Module):
    """Holds the trainable readout parameters; the state tensor itself is
    owned by the caller (one generation loop per sentence)."""

    def __init__(self, d: int, n_actions: int, config: SruConfig | None = None):
        super().__init__()
        config = config or SruConfig()
        self.d = d
        self.n_latents = config.latent_multiplier * n_actions
        self.half_context = config.half_context
        self.d1 = nn.Parameter(torch.ones(d))
        self.d2 = nn.Parameter(torch.ones(d))
        self.latents = nn.Parameter(torch.randn(self.n_latents, d) * d**-0.5)
        # positional rows start at the content scale so slot attention can
        # key on cursor distance from the first steps
        self.position_table = nn.Parameter(torch.randn(2 * config.half_context + 1, d) * d**-0.5)
        self.alpha = nn.Parameter(torch.tensor(1.0), requires_grad=config.train_alpha)
        self.latent_dropout = nn.Dropout(config.latent_dropout)
        self.position_dropout = nn.Dropout(config.position_dropout)

    def update(self, state: torch.Tensor, omega: torch.Tensor, p: int) -> torch.Tensor:
        return sru_update(state, omega, p)

    def attention(self, state: torch.Tensor, p: int) -> torch.Tensor:
        """Softmax slot weights over the position-enhanced state."""
        q = state.shape[0]
        if not 0 <= p < q:
            raise IndexError(f"slot index {p} out of range for {q} slots")
        pos = relative_position_rows(p, q, self.half_context, self.position_table)
        c_pos = self.alpha * state + self.position_dropout(pos)
        scores = (self.latent_dropout(self.latents) * self.d2) @ c_pos.T
        return torch.softmax(scores.max(dim=0).values, dim=0)

    def output(self, state: torch.Tensor, p: int) -> torch.Tensor:
        """Attention-weighted summary h; dropout is active only in train mode."""
        w = self.attention(state, p)
        return w @ (state * self.d1)


def sru_output(state: torch.Tensor, p: int, unit: SlotRecurrentUnit, training: bool = False) -> torch.Tensor:
    """Functional wrapper that pins the train/eval mode for one call."""
    was_training = unit.training
    unit.train(training)
    try:
        return unit.output(state, p)
    finally:
        unit.train(was_training)
