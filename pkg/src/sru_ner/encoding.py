"""Encoder adapters: turn a tokenized sentence into the (N+2, d_enc) matrix
[CLS row, one max-pooled row per word, SEP row].

Two adapters implement the same small interface (``subword_tokens`` plus
``forward_subwords``): a pretrained-transformer wrapper and a deterministic
hash-embedding stand-in that needs no downloads and stays fully trainable.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from .actions import Sentence
from .config import EncoderConfig


class SentenceTooLongError(ValueError):
    """Sentence exceeds the encoder's subword window; never silently truncated."""


@dataclass
class EncodedSentence:
    """Contextual embeddings: row 0 is CLS, rows 1..N are words, row N+1 is SEP."""

    matrix: torch.Tensor
    n_words: int

    def __post_init__(self):
        if self.matrix.shape[0] != self.n_words + 2:
            raise ValueError(
                f"expected {self.n_words + 2} rows, got {self.matrix.shape[0]}"
            )

    @property
    def d_enc(self) -> int:
        return self.matrix.shape[1]


class EncoderAdapter(nn.Module):
    """Interface: subword tokenization, forward to per-subword rows, CLS/SEP rows."""

    d_enc: int
    max_subwords: int

    def subword_tokens(self, words: Sequence[str]) -> list[list[str]]:
        raise NotImplementedError

    def forward_subwords(self, words: Sequence[str]) -> tuple[torch.Tensor, list[tuple[int, int]]]:
        """Return ((n_subwords + 2) x d_enc) embeddings and per-word row ranges.

        Row 0 must be the CLS row and the last row the SEP row; ``ranges[i]``
        is the half-open row interval covering word i's subwords.
        """
        raise NotImplementedError


def encode_sentence(sentence: Sentence, encoder: EncoderAdapter) -> EncodedSentence:
    """Embed a sentence; each word row is the coordinatewise max of its subword rows."""
    if len(sentence) == 0:
        raise ValueError("cannot encode an empty sentence")
    pieces = encoder.subword_tokens(sentence.tokens)
    total = 2 + sum(len(p) for p in pieces)
    if total > encoder.max_subwords:
        raise SentenceTooLongError(
            f"sentence needs {total} subword rows, encoder window is {encoder.max_subwords}"
        )
    rows, ranges = encoder.forward_subwords(sentence.tokens)
    pooled = [rows[0]]
    for lo, hi in ranges:
        pooled.append(rows[lo:hi].max(dim=0).values)
    pooled.append(rows[-1])
    matrix = torch.stack(pooled)
    if not torch.isfinite(matrix).all():
        raise ValueError("encoder produced non-finite embeddings")
    return EncodedSentence(matrix=matrix, n_words=len(sentence))


class ToyHashEncoder(EncoderAdapter):
    """Seeded hash-bucket embeddings mixed by one self-attention layer.

    Words split into fixed-length character chunks; each chunk indexes a
    CRC32 bucket of a trainable lookup table, so identical inputs embed
    identically across runs and processes. A single residual attention layer
    makes the rows context-dependent. Buckets 0 and 1 are reserved for the
    CLS and SEP rows.
    """

    def __init__(self, seed: int = 0, d_enc: int = 32, buckets: int = 2048,
                 max_subwords: int = 512, chunk_len: int = 4):
        super().__init__()
        if d_enc < 2:
            raise ValueError("d_enc must be at least 2")
        if buckets < 3:
            raise ValueError("need at least one non-reserved bucket")
        self.d_enc = d_enc
        self.max_subwords = max_subwords
        self.chunk_len = chunk_len
        self.buckets = buckets
        gen = torch.Generator().manual_seed(seed)
        self.table = nn.Parameter(torch.randn((buckets, d_enc), generator=gen) * 0.5)
        scale = d_enc ** -0.5
        self.w_query = nn.Parameter(torch.randn((d_enc, d_enc), generator=gen) * scale)
        self.w_key = nn.Parameter(torch.randn((d_enc, d_enc), generator=gen) * scale)
        self.w_value = nn.Parameter(torch.randn((d_enc, d_enc), generator=gen) * scale)

    def subword_tokens(self, words: Sequence[str]) -> list[list[str]]:
        out = []
        for word in words:
            if len(word) <= self.chunk_len:
                out.append([word])
            else:
                out.append([word[i:i + self.chunk_len] for i in range(0, len(word), self.chunk_len)])
        return out

    def _bucket(self, piece: str) -> int:
        return 2 + zlib.crc32(piece.encode("utf-8")) % (self.buckets - 2)

    def forward_subwords(self, words: Sequence[str]) -> tuple[torch.Tensor, list[tuple[int, int]]]:
        pieces = self.subword_tokens(words)
        ids = [0]
        ranges = []
        for group in pieces:
            lo = len(ids)
            ids.extend(self._bucket(p) for p in group)
            ranges.append((lo, len(ids)))
        ids.append(1)
        x = self.table[torch.tensor(ids, dtype=torch.long)]
        q = x @ self.w_query
        k = x @ self.w_key
        v = x @ self.w_value
        attn = torch.softmax(q @ k.T * (self.d_enc ** -0.5), dim=-1)
        return x + attn @ v, ranges


def toy_encoder(seed: int, d_enc: int, **kwargs) -> ToyHashEncoder:
    """Deterministic trainable encoder for tests and overfit runs."""
    return ToyHashEncoder(seed=seed, d_enc=d_enc, **kwargs)


class PretrainedTransformerEncoder(EncoderAdapter):
    """Adapter over a HuggingFace masked-LM encoder (requires ``transformers``)."""

    def __init__(self, name: str, max_subwords: int | None = None):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise ImportError(
                "encoder.kind='pretrained' requires the 'transformers' package "
                "(pip install sru-ner[pretrained])"
            ) from exc
        self.tokenizer = AutoTokenizer.from_pretrained(name)
        self.model = AutoModel.from_pretrained(name)
        self.d_enc = self.model.config.hidden_size
        if max_subwords is not None:
            self.max_subwords = max_subwords
        else:
            window = self.tokenizer.model_max_length
            if window is None or window > 1_000_000:  # unset sentinel
                window = getattr(self.model.config, "max_position_embeddings", 512)
            self.max_subwords = int(window)

    def subword_tokens(self, words: Sequence[str]) -> list[list[str]]:
        out = []
        for word in words:
            pieces = self.tokenizer.tokenize(word)
            out.append(pieces if pieces else [self.tokenizer.unk_token])
        return out

    def forward_subwords(self, words: Sequence[str]) -> tuple[torch.Tensor, list[tuple[int, int]]]:
        pieces = self.subword_tokens(words)
        ids = [self.tokenizer.cls_token_id]
        ranges = []
        for group in pieces:
            lo = len(ids)
            ids.extend(self.tokenizer.convert_tokens_to_ids(group))
            ranges.append((lo, len(ids)))
        ids.append(self.tokenizer.sep_token_id)
        tensor = torch.tensor([ids], dtype=torch.long)
        hidden = self.model(input_ids=tensor).last_hidden_state[0]
        return hidden, ranges


def build_encoder(config: EncoderConfig, seed: int = 0) -> EncoderAdapter:
    """Construct the encoder selected by ``encoder.kind``."""
    if config.kind == "toy":
        return ToyHashEncoder(
            seed=seed,
            d_enc=config.d_enc,
            buckets=config.buckets,
            max_subwords=config.max_subwords,
            chunk_len=config.chunk_len,
        )
    if config.kind == "pretrained":
        if not config.name:
            raise ValueError("encoder.kind='pretrained' requires encoder.name")
        return PretrainedTransformerEncoder(config.name, max_subwords=config.max_subwords)
    raise ValueError(f"unknown encoder kind {config.kind!r}")
