"""Iterative action selection: a word cursor, a gated mixture of action
embeddings feeding the slot memory, and an MLP head scoring every action.

Each step t consumes the previous step's mixture omega and the current cursor
p: the slot memory is updated with (omega, p), read out to h, and the logits
are ``MLP(concat(S[p+1], h))`` where S[p+1] is the embedding of the next
unparsed token (the SEP row once every word is shifted). The first step uses
p = 0 and a trained begin-of-actions vector as omega.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import GeneratorConfig
from .encoding import EncodedSentence
from .sru import SlotRecurrentUnit, sru_update


def inference_step_cap(n_words: int) -> int:
    """Hard stop for the inference loop; generous over any gold sequence length."""
    return 8 * n_words + 16


def word_cursor(rows, shift_index: int = 0) -> int:
    """Number of rows whose argmax action is SH (the tokens parsed so far)."""
    count = 0
    for row in rows:
        if int(torch.argmax(row)) == shift_index:
            count += 1
    return count


def gated_action_mixture(u_row: torch.Tensor, action_embeddings: torch.Tensor,
                         shift_index: int = 0) -> torch.Tensor:
    """Sum of action embeddings weighted by their logits, keeping only actions
    whose logit reaches the SH logit (SH itself always contributes)."""
    gate = (u_row >= u_row[shift_index]).to(u_row.dtype)
    return (u_row * gate) @ action_embeddings


@dataclass
class GenerationResult:
    """Raw logits, one row per loop step, plus loop diagnostics."""

    logits: torch.Tensor  # (T_final, n_actions)
    truncated: bool = False
    excess_shifts: int = 0

    @property
    def n_steps(self) -> int:
        return self.logits.shape[0]


class ActionGenerator(nn.Module):
    """Action embeddings, begin-of-actions vector, MLP head, and slot memory."""

    def __init__(self, n_actions: int, d_enc: int, sru: SlotRecurrentUnit,
                 config: GeneratorConfig | None = None,
                 shift_index: int = 0, eoa_index: int = 1):
        super().__init__()
        config = config or GeneratorConfig()
        hidden = config.hidden or d_enc
        self.n_actions = n_actions
        self.shift_index = shift_index
        self.eoa_index = eoa_index
        self.action_embeddings = nn.Parameter(torch.randn(n_actions, d_enc) * d_enc**-0.5)
        self.boa = nn.Parameter(torch.randn(d_enc) * d_enc**-0.5)
        self.mlp = nn.Sequential(
            nn.Dropout(config.logit_dropout),
            nn.Linear(2 * d_enc, hidden),
            nn.Tanh(),
            nn.Linear(hidden, n_actions),
        )
        # Shift-by-default init: a positive SH bias keeps untrained logits
        # from outscoring SH, which would trip the training-time shift-delay
        # rule on every gold SH row (out-of-task columns receive no gradient
        # of their own, so only this margin keeps them below SH until their
        # home dataset trains them down).
        nn.init.zeros_(self.mlp[-1].bias)
        with torch.no_grad():
            self.mlp[-1].bias[shift_index] = 1.0
        self.sru = sru

    def mixture(self, u_row: torch.Tensor) -> torch.Tensor:
        return gated_action_mixture(u_row, self.action_embeddings, self.shift_index)

    def step(self, encoded: EncodedSentence, state: torch.Tensor, p: int,
             omega_prev: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """One generation step: returns the logit row and the updated slot state."""
        if not 0 <= p <= encoded.n_words:
            raise IndexError(f"cursor {p} out of range for {encoded.n_words} words")
        new_state = sru_update(state, omega_prev, p)
        h = self.sru.output(new_state, p)
        features = torch.cat([encoded.matrix[p + 1], h])
        return self.mlp(features), new_state

    def generate(self, encoded: EncodedSentence, mode: str = "inference",
                 gold=None, max_steps: int | None = None) -> GenerationResult:
        """Run the generation loop.

        Inference mode halts once sigmoid(u_EOA) > 0.5, with a hard step cap
        as a backstop for untrained models; the cursor follows the argmax-SH
        count and never passes the last word. Training mode is teacher-forced:
        ``gold`` must expose ``n_rows``, ``augment(t, u_row, allow_insert)``
        and ``is_hard_shift(t)``; the loop emits exactly one row per
        (dynamically augmented) gold row and the cursor follows the gold
        shift schedule.
        """
        n = encoded.n_words
        cap = max_steps if max_steps is not None else inference_step_cap(n)
        state = encoded.matrix  # C^(0) = S
        p = 0
        omega = self.boa
        rows: list[torch.Tensor] = []
        truncated = False
        excess_shifts = 0

        if mode == "training":
            if gold is None:
                raise ValueError("training mode requires a gold action matrix")
            t = 0
            while t < gold.n_rows:
                u_row, state = self.step(encoded, state, p, omega)
                rows.append(u_row)
                gold.augment(t, u_row, allow_insert=gold.inserted_rows < cap)
                if gold.is_hard_shift(t) and p < n:
                    p += 1
                omega = self.mixture(u_row)
                t += 1
            truncated = bool(getattr(gold, "insertion_blocked", False))
        elif mode == "inference":
            for _ in range(cap):
                u_row, state = self.step(encoded, state, p, omega)
                rows.append(u_row)
                if torch.sigmoid(u_row[self.eoa_index]) > 0.5:
                    break
                if int(torch.argmax(u_row)) == self.shift_index:
                    if p < n:
                        p += 1
                    else:
                        excess_shifts += 1
                omega = self.mixture(u_row)
            else:
                truncated = True
        else:
            raise ValueError(f"unknown generation mode {mode!r}")

        return GenerationResult(
            logits=torch.stack(rows), truncated=truncated, excess_shifts=excess_shifts
        )
