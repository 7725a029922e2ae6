"""Shared oracles: well-nested mention-set builders, a straight-line numpy
re-implementation of the slot readout, and a central finite-difference
gradient checker."""

from __future__ import annotations

import itertools

import numpy as np
import torch

from sru_ner.actions import Mention


def all_spans(n_tokens: int) -> list[tuple[int, int]]:
    return [(s, e) for s in range(n_tokens) for e in range(s, n_tokens)]


def spans_cross(a: tuple[int, int], b: tuple[int, int]) -> bool:
    """True when the spans partially overlap (neither nested nor disjoint)."""
    (s1, e1), (s2, e2) = sorted((a, b))
    return s1 < s2 <= e1 < e2 or (s1 == s2 and False)


def laminar_span_sets(n_tokens: int) -> list[tuple[tuple[int, int], ...]]:
    """Every subset of spans over n_tokens with no partially overlapping pair."""
    spans = all_spans(n_tokens)
    out = []
    for mask in range(1 << len(spans)):
        chosen = [spans[i] for i in range(len(spans)) if mask >> i & 1]
        if all(not spans_cross(a, b) for a, b in itertools.combinations(chosen, 2)):
            out.append(tuple(chosen))
    return out


def well_nested_mention_sets(n_tokens: int, entity_types: tuple[str, ...]):
    """Yield every well-nested mention set over the tokens and types.

    Same-type spans must be laminar; spans of different types are free to
    cross, so the enumeration is the cross product of per-type laminar sets.
    """
    laminar = laminar_span_sets(n_tokens)
    per_type = [
        [tuple(Mention(s, e, label) for (s, e) in spans) for spans in laminar]
        for label in entity_types
    ]
    for combo in itertools.product(*per_type):
        yield tuple(itertools.chain.from_iterable(combo))


def numpy_slot_readout(C, p, d1, d2, latents, table, half_context, alpha):
    """Independent step-by-step recomputation of the slot readout (no torch)."""
    Q, _ = C.shape
    distances = np.clip(np.arange(Q) - p, -half_context, half_context) + half_context
    pos = table[distances]
    c_pos = alpha * C + pos
    scores = (latents * d2) @ c_pos.T
    per_slot = scores.max(axis=0)
    shifted = np.exp(per_slot - per_slot.max())
    weights = shifted / shifted.sum()
    return weights @ (C * d1)


def central_difference_grad(f, tensor: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Central finite differences of scalar-valued ``f`` w.r.t. every entry."""
    grad = torch.zeros_like(tensor)
    flat = tensor.view(-1) if tensor.dim() else tensor.reshape(1)
    flat_grad = grad.view(-1) if grad.dim() else grad.reshape(1)
    for i in range(flat.numel()):
        with torch.no_grad():
            flat[i] += eps
            up = float(f())
            flat[i] -= 2 * eps
            down = float(f())
            flat[i] += eps
        flat_grad[i] = (up - down) / (2 * eps)
    return grad


def max_relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    scale = max(float(numeric.abs().max()), float(analytic.abs().max()), 1e-12)
    return float((analytic - numeric).abs().max()) / scale


def toy_corpus_root():
    from pathlib import Path

    return Path(__file__).resolve().parent.parent / "data" / "toy"


def toy_nested_corpora():
    """The bundled eight-sentence two-dataset corpus (nesting in the first)."""
    from sru_ner.corpus import read_nested_corpus

    root = toy_corpus_root()
    spec_a = read_nested_corpus(root / "alpha", name="alpha", entity_types=("Agent", "Site"))
    spec_b = read_nested_corpus(root / "beta", name="beta", entity_types=("Event",))
    return spec_a, spec_b


_FILLERS = [
    "the", "patient", "received", "daily", "doses", "of", "and", "was",
    "treated", "with", "after", "showed", "response", "severe", "acute",
    "baseline", "improved", "symptoms", "during", "trial",
]
_CHEM_NAMES = ["toxirol", "bromexin", "curatex", "zanilox", "pentarin", "ferrozine", "quinaline", "mexalate"]
_CHEM_SUFFIXES = ["acetate", "chloride"]
_DIS_NAMES = ["feverosis", "dermatitis", "nephrosis", "myalgia", "cardiopathy", "anemia", "colitis", "vertigo"]
_DIS_SUFFIXES = ["syndrome", "disorder"]


def synthetic_two_type_corpus(n_sentences: int, seed: int,
                              chem_type: str = "Chemical",
                              dis_type: str = "Disease"):
    """Flat two-type sentences with learnable surface forms; every sentence
    carries at least one mention of each type."""
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(n_sentences):
        slots = (["chem"] * int(rng.integers(1, 3))
                 + ["dis"] * int(rng.integers(1, 3))
                 + ["fill"] * int(rng.integers(3, 7)))
        rng.shuffle(slots)
        tokens: list[str] = []
        mentions: list[Mention] = []
        for slot in slots:
            if slot == "fill":
                tokens.append(_FILLERS[int(rng.integers(0, len(_FILLERS)))])
                continue
            names, suffixes, label = (
                (_CHEM_NAMES, _CHEM_SUFFIXES, chem_type)
                if slot == "chem"
                else (_DIS_NAMES, _DIS_SUFFIXES, dis_type)
            )
            start = len(tokens)
            tokens.append(names[int(rng.integers(0, len(names)))])
            if rng.random() < 0.35:
                tokens.append(suffixes[int(rng.integers(0, len(suffixes)))])
            mentions.append(Mention(start, len(tokens) - 1, label))
        sentences.append((tokens, mentions))
    return sentences


def random_well_nested(
    rng: np.random.Generator,
    max_tokens: int = 8,
    entity_types: tuple[str, ...] = ("A", "B"),
    max_per_type: int = 4,
) -> tuple[int, tuple[Mention, ...]]:
    """A random sentence length and well-nested mention set (rejection sampled)."""
    n = int(rng.integers(1, max_tokens + 1))
    mentions: list[Mention] = []
    for label in entity_types:
        kept: list[tuple[int, int]] = []
        for _ in range(int(rng.integers(0, max_per_type + 1))):
            s = int(rng.integers(0, n))
            e = int(rng.integers(s, n))
            if (s, e) in kept:
                continue
            if any(spans_cross((s, e), other) for other in kept):
                continue
            kept.append((s, e))
        mentions.extend(Mention(s, e, label) for s, e in kept)
    return n, tuple(mentions)
