"""Action codec: lossless conversion between nested typed mentions and
transition-action sequences, plus thresholded decoding of per-step action
probability rows.

The transition system uses four action kinds over a registry of M entity
types (2M+2 actions total):

* ``SH``        -- shift: consume one word; the shift count is the word cursor.
* ``EOA``       -- end of actions: terminates a sequence.
* ``TR:<type>`` -- open a mention of ``<type>`` at the current cursor.
* ``RE:<type>`` -- close the most recently opened mention of ``<type>``.

Nesting is expressed purely through action order: mentions starting at the
same word open longest-first, mentions ending at the same word close
shortest-first, so per-type stacks recover the spans exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SHIFT = "SH"
END_OF_ACTIONS = "EOA"
TRANSITION = "TR"
REDUCE = "RE"


class CodecError(ValueError):
    """Invalid sentence, mention set, or action input."""


@dataclass(frozen=True)
class Sentence:
    """A tokenized sentence, optionally tagged with its source dataset."""

    tokens: tuple[str, ...]
    source_dataset: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class Mention:
    """A typed token span; ``start`` and ``end`` are inclusive 0-based indices."""

    start: int
    end: int
    entity_type: str

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class ScoredMention:
    """A decoded mention plus its confidence (mean of opening and closing probabilities)."""

    start: int
    end: int
    entity_type: str
    score: float

    def mention(self) -> Mention:
        return Mention(self.start, self.end, self.entity_type)


@dataclass(frozen=True)
class Action:
    kind: str
    entity_type: str | None = None

    def __str__(self) -> str:
        if self.entity_type is None:
            return self.kind
        return f"{self.kind}:{self.entity_type}"

    @classmethod
    def parse(cls, token: str) -> "Action":
        if token == SHIFT or token == END_OF_ACTIONS:
            return cls(token)
        kind, sep, label = token.partition(":")
        if not sep or kind not in (TRANSITION, REDUCE) or not label:
            raise CodecError(f"unparseable action token: {token!r}")
        return cls(kind, label)


def shift() -> Action:
    return Action(SHIFT)


def end_of_actions() -> Action:
    return Action(END_OF_ACTIONS)


def transition(entity_type: str) -> Action:
    return Action(TRANSITION, entity_type)


def reduce(entity_type: str) -> Action:
    return Action(REDUCE, entity_type)


class ActionVocabulary:
    """The ordered action set SH, EOA, TR/RE per entity type (2M+2 actions).

    Index layout: 0 = SH, 1 = EOA, then (TR, RE) pairs in entity-type order.
    Entity-type order doubles as the tie-break rank for equal-length mentions
    during encoding.
    """

    def __init__(self, entity_types: Sequence[str]):
        types = tuple(entity_types)
        if len(set(types)) != len(types):
            raise CodecError("duplicate entity types in vocabulary")
        self.entity_types = types
        actions: list[Action] = [shift(), end_of_actions()]
        for label in types:
            actions.append(transition(label))
            actions.append(reduce(label))
        self.actions = tuple(actions)
        self._index = {action: i for i, action in enumerate(self.actions)}
        self._type_rank = {label: i for i, label in enumerate(types)}
        self._transitions = {label: transition(label) for label in types}
        self._reduces = {label: reduce(label) for label in types}
        self.shift_index = 0
        self.eoa_index = 1

    def __len__(self) -> int:
        return len(self.actions)

    def __contains__(self, action: Action) -> bool:
        return action in self._index

    def index(self, action: Action) -> int:
        try:
            return self._index[action]
        except KeyError:
            raise CodecError(f"action {action} not in vocabulary") from None

    def action(self, index: int) -> Action:
        return self.actions[index]

    def transition_index(self, entity_type: str) -> int:
        return self.index(transition(entity_type))

    def reduce_index(self, entity_type: str) -> int:
        return self.index(reduce(entity_type))

    def type_rank(self, entity_type: str) -> int:
        try:
            return self._type_rank[entity_type]
        except KeyError:
            raise CodecError(f"entity type {entity_type!r} not in vocabulary") from None


@dataclass(frozen=True)
class ActionSequence:
    actions: tuple[Action, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def serialize(self) -> str:
        """Whitespace-separated token form (``SH``, ``EOA``, ``TR:<label>``, ``RE:<label>``)."""
        for action in self.actions:
            if action.entity_type is not None and any(c.isspace() for c in action.entity_type):
                raise CodecError(
                    f"label {action.entity_type!r} contains whitespace and cannot be serialized"
                )
        return " ".join(str(a) for a in self.actions)

    @classmethod
    def parse(cls, text: str) -> "ActionSequence":
        return cls(tuple(Action.parse(tok) for tok in text.split()))


@dataclass
class DecodeDiagnostics:
    """Counters for action-stream anomalies the decoder tolerates silently."""

    empty_stack_reduces: int = 0
    unclosed_spans: int = 0
    excess_shifts: int = 0
    late_transitions: int = 0
    degenerate_spans: int = 0

    def total(self) -> int:
        return (
            self.empty_stack_reduces
            + self.unclosed_spans
            + self.excess_shifts
            + self.late_transitions
            + self.degenerate_spans
        )


def _check_sentence(sentence: Sentence) -> int:
    if len(sentence) == 0:
        raise CodecError("sentence has no tokens")
    return len(sentence)


def _check_mentions(mentions: Sequence[Mention], n_tokens: int, vocab: ActionVocabulary):
    seen = set()
    for m in mentions:
        if not (0 <= m.start <= m.end < n_tokens):
            raise CodecError(f"mention {m} out of range for {n_tokens} tokens")
        vocab.type_rank(m.entity_type)
        key = (m.start, m.end, m.entity_type)
        if key in seen:
            raise CodecError(f"duplicate mention {m}")
        seen.add(key)
    # Same-type partial overlap cannot be expressed with per-type stacks.
    by_type: dict[str, list[Mention]] = {}
    for m in mentions:
        by_type.setdefault(m.entity_type, []).append(m)
    for label, group in by_type.items():
        group.sort(key=lambda m: (m.start, -m.end))
        for i, a in enumerate(group):
            for b in group[i + 1 :]:
                if b.start > a.end:
                    break
                if b.end > a.end:
                    raise CodecError(
                        f"crossing same-type mentions {a} and {b} are not encodable"
                    )


def encode_mentions(
    sentence: Sentence, mentions: Sequence[Mention], vocab: ActionVocabulary
) -> ActionSequence:
    """Encode a well-nested mention set into its unique canonical action sequence.

    Before the SH of word i, TR actions for mentions starting at i are emitted
    longest-first; after the SH of word j, RE actions for mentions ending at j
    are emitted shortest-first. Length ties (necessarily across entity types)
    break by vocabulary label order. Raises ``CodecError`` for out-of-range
    spans, duplicates, unknown types, or same-type partially overlapping pairs.
    """
    n = _check_sentence(sentence)
    _check_mentions(mentions, n, vocab)

    starts: dict[int, list[Mention]] = {}
    ends: dict[int, list[Mention]] = {}
    for m in mentions:
        starts.setdefault(m.start, []).append(m)
        ends.setdefault(m.end, []).append(m)
    for group in starts.values():
        group.sort(key=lambda m: (-m.length, vocab.type_rank(m.entity_type)))
    for group in ends.values():
        group.sort(key=lambda m: (m.length, vocab.type_rank(m.entity_type)))

    sh = vocab.actions[vocab.shift_index]
    actions: list[Action] = []
    for i in range(n):
        for m in starts.get(i, ()):
            actions.append(vocab._transitions[m.entity_type])
        actions.append(sh)
        for m in ends.get(i, ()):
            actions.append(vocab._reduces[m.entity_type])
    actions.append(vocab.actions[vocab.eoa_index])
    return ActionSequence(tuple(actions))


class _SpanStacks:
    """Per-type stacks of open spans shared by both decoders."""

    def __init__(self, n_tokens: int, diagnostics: DecodeDiagnostics):
        self.n = n_tokens
        self.diag = diagnostics
        self.open: dict[str, list[tuple[int, float]]] = {}
        self.closed: list[ScoredMention] = []
        self._seen: set[tuple[int, int, str]] = set()

    def push(self, entity_type: str, cursor: int, score: float):
        if cursor >= self.n:
            self.diag.late_transitions += 1
            return
        self.open.setdefault(entity_type, []).append((cursor, score))

    def pop(self, entity_type: str, cursor: int, score: float):
        stack = self.open.get(entity_type)
        if not stack:
            self.diag.empty_stack_reduces += 1
            return
        start, open_score = stack.pop()
        end = cursor - 1
        if end < start:
            self.diag.degenerate_spans += 1
            return
        key = (start, end, entity_type)
        if key in self._seen:
            return
        self._seen.add(key)
        self.closed.append(ScoredMention(start, end, entity_type, (open_score + score) / 2.0))

    def finish(self) -> list[ScoredMention]:
        self.diag.unclosed_spans += sum(len(s) for s in self.open.values())
        return self.closed


def _sorted_mentions(scored: Iterable[ScoredMention], vocab: ActionVocabulary) -> list[ScoredMention]:
    return sorted(scored, key=lambda s: (s.start, s.end, vocab.type_rank(s.entity_type)))


def decode_actions(
    sequence: ActionSequence,
    sentence: Sentence,
    vocab: ActionVocabulary,
    diagnostics: DecodeDiagnostics | None = None,
) -> list[Mention]:
    """Replay an action sequence into its mention set.

    SH advances the word cursor, TR(e) opens a span at the cursor on the stack
    for e, RE(e) closes the most recent open span of e at cursor-1. Reduces on
    an empty stack and spans still open at EOA are dropped, not raised; the
    drops are tallied on ``diagnostics`` when one is supplied.
    """
    n = _check_sentence(sentence)
    diag = diagnostics if diagnostics is not None else DecodeDiagnostics()
    open_spans: dict[str, list[int]] = {}
    closed: list[Mention] = []
    seen: set[tuple[int, int, str]] = set()
    cursor = 0
    for action in sequence:
        kind = action.kind
        if kind == SHIFT:
            if cursor >= n:
                diag.excess_shifts += 1
            else:
                cursor += 1
        elif kind == TRANSITION:
            vocab.type_rank(action.entity_type)
            if cursor >= n:
                diag.late_transitions += 1
            else:
                open_spans.setdefault(action.entity_type, []).append(cursor)
        elif kind == REDUCE:
            vocab.type_rank(action.entity_type)
            stack = open_spans.get(action.entity_type)
            if not stack:
                diag.empty_stack_reduces += 1
                continue
            start = stack.pop()
            end = cursor - 1
            if end < start:
                diag.degenerate_spans += 1
            elif (start, end, action.entity_type) not in seen:
                seen.add((start, end, action.entity_type))
                closed.append(Mention(start, end, action.entity_type))
        elif kind == END_OF_ACTIONS:
            break
        else:  # pragma: no cover - Action.parse rejects other kinds
            raise CodecError(f"unknown action kind {kind!r}")
    diag.unclosed_spans += sum(len(s) for s in open_spans.values())
    return sorted(closed, key=lambda m: (m.start, m.end, vocab.type_rank(m.entity_type)))


def _decode_rows(
    rows: np.ndarray, n_tokens: int, vocab: ActionVocabulary, diag: DecodeDiagnostics
) -> list[ScoredMention]:
    if rows.ndim != 2 or rows.shape[1] != len(vocab):
        raise CodecError(
            f"probability rows have shape {rows.shape}, expected (*, {len(vocab)})"
        )
    if rows.size and (rows.min() < 0.0 or rows.max() > 1.0):
        raise CodecError("probability rows must lie in [0, 1]")
    stacks = _SpanStacks(n_tokens, diag)
    cursor = 0
    tr_cols = [(vocab.transition_index(t), t) for t in vocab.entity_types]
    re_cols = [(vocab.reduce_index(t), t) for t in vocab.entity_types]
    for row in rows:
        best = int(np.argmax(row))
        if best == vocab.eoa_index:
            break
        # Reduces apply before transitions so a span cannot close in the row
        # that opened it; both apply at the pre-shift cursor.
        for col, label in re_cols:
            if row[col] > 0.5:
                stacks.pop(label, cursor, float(row[col]))
        for col, label in tr_cols:
            if row[col] > 0.5:
                stacks.push(label, cursor, float(row[col]))
        if best == vocab.shift_index:
            if cursor >= n_tokens:
                diag.excess_shifts += 1
            else:
                cursor += 1
    return _sorted_mentions(stacks.finish(), vocab)


def decode_probabilities(
    probs,
    sentence: Sentence,
    vocab: ActionVocabulary,
    diagnostics: DecodeDiagnostics | None = None,
) -> list[Mention]:
    """Decode per-step sigmoid probability rows into mentions.

    Rows are consumed in order until one whose argmax is EOA (later rows are
    ignored). Within a row every TR/RE with probability above 0.5 is applied,
    and the cursor advances when the argmax is SH; stack semantics match
    ``decode_actions``.
    """
    scored = decode_probabilities_scored(probs, sentence, vocab, diagnostics)
    return [s.mention() for s in scored]


def decode_probabilities_scored(
    probs,
    sentence: Sentence,
    vocab: ActionVocabulary,
    diagnostics: DecodeDiagnostics | None = None,
) -> list[ScoredMention]:
    """Like ``decode_probabilities`` but keeps per-mention confidence scores."""
    n = _check_sentence(sentence)
    diag = diagnostics if diagnostics is not None else DecodeDiagnostics()
    rows = np.asarray(probs, dtype=np.float64)
    if rows.size == 0:
        rows = rows.reshape(0, len(vocab))
    return _decode_rows(rows, n, vocab, diag)


def one_hot_rows(sequence: ActionSequence, vocab: ActionVocabulary) -> np.ndarray:
    """Probability rows realizing a sequence one action per row (for tests and oracles)."""
    rows = np.zeros((len(sequence), len(vocab)), dtype=np.float64)
    for t, action in enumerate(sequence):
        rows[t, vocab.index(action)] = 1.0
    return rows


def sequence_issues(sequence: ActionSequence, n_tokens: int) -> list[str]:
    """Well-formedness report: SH count, terminal EOA, per-type TR/RE balance."""
    issues: list[str] = []
    shifts = sum(1 for a in sequence if a.kind == SHIFT)
    if shifts != n_tokens:
        issues.append(f"expected {n_tokens} SH actions, found {shifts}")
    eoa_positions = [i for i, a in enumerate(sequence) if a.kind == END_OF_ACTIONS]
    if len(eoa_positions) != 1 or eoa_positions[0] != len(sequence) - 1:
        issues.append("sequence must contain exactly one EOA, in final position")
    depth: dict[str, int] = {}
    for a in sequence:
        if a.kind == TRANSITION:
            depth[a.entity_type] = depth.get(a.entity_type, 0) + 1
        elif a.kind == REDUCE:
            depth[a.entity_type] = depth.get(a.entity_type, 0) - 1
            if depth[a.entity_type] < 0:
                issues.append(f"RE:{a.entity_type} without a matching open TR")
                depth[a.entity_type] = 0
    for label, d in sorted(depth.items()):
        if d > 0:
            issues.append(f"{d} unclosed TR:{label}")
    return issues
