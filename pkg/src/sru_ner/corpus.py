"""Corpus ingestion and tooling: BIO files, nested standoff records (JSONL),
per-split statistics, and the synthetic partial-annotation split.

Nested record format, one JSON object per line::

    {"tokens": ["NF", "-", "chi", "B"], "mentions": [{"start": 0, "end": 3, "type": "DNA"}]}

Mention spans are inclusive token indices. Predicted mentions may carry an
extra ``score`` field, which the gold reader ignores.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .actions import Mention, ScoredMention, Sentence

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "dev", "test")


class CorpusError(ValueError):
    """Unreadable or inconsistent corpus file."""


@dataclass(frozen=True)
class AnnotatedSentence:
    sentence: Sentence
    mentions: tuple[Mention, ...]

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.sentence.tokens


@dataclass
class DatasetSpec:
    """A named dataset with train/dev/test splits and its declared entity types."""

    name: str
    entity_types: tuple[str, ...]
    splits: dict[str, tuple[AnnotatedSentence, ...]]
    warnings: list[str] = field(default_factory=list)

    def split(self, name: str) -> tuple[AnnotatedSentence, ...]:
        return self.splits.get(name, ())

    @property
    def train(self) -> tuple[AnnotatedSentence, ...]:
        return self.split("train")

    @property
    def dev(self) -> tuple[AnnotatedSentence, ...]:
        return self.split("dev")

    @property
    def test(self) -> tuple[AnnotatedSentence, ...]:
        return self.split("test")


def _same_type_crossing(mentions: Sequence[Mention]) -> bool:
    by_type: dict[str, list[Mention]] = {}
    for m in mentions:
        by_type.setdefault(m.entity_type, []).append(m)
    for group in by_type.values():
        group.sort(key=lambda m: (m.start, -m.end))
        for i, a in enumerate(group):
            for b in group[i + 1 :]:
                if b.start > a.end:
                    break
                if b.end > a.end:
                    return True
    return False


def make_dataset(
    name: str,
    splits: dict[str, Sequence[tuple[Sequence[str], Sequence[Mention]]]],
    entity_types: Sequence[str] | None = None,
) -> DatasetSpec:
    """Assemble a DatasetSpec from raw (tokens, mentions) pairs per split.

    Entity types default to the sorted set observed across all splits. Every
    mention is validated against its sentence and the declared types; sentences
    whose same-type spans cross are kept (they still evaluate) but flagged with
    a warning because they cannot be action-encoded.
    """
    observed: set[str] = set()
    for pairs in splits.values():
        for _, mentions in pairs:
            observed.update(m.entity_type for m in mentions)
    if entity_types is None:
        types = tuple(sorted(observed))
    else:
        types = tuple(entity_types)
        missing = observed - set(types)
        if missing:
            raise CorpusError(f"{name}: mentions use undeclared types {sorted(missing)}")

    warnings: list[str] = []
    out_splits: dict[str, tuple[AnnotatedSentence, ...]] = {}
    for split_name, pairs in splits.items():
        rows = []
        for i, (tokens, mentions) in enumerate(pairs):
            tokens = tuple(tokens)
            if not tokens:
                raise CorpusError(f"{name}/{split_name}[{i}]: empty sentence")
            seen = set()
            for m in mentions:
                if not (0 <= m.start <= m.end < len(tokens)):
                    raise CorpusError(f"{name}/{split_name}[{i}]: span {m} out of range")
                key = (m.start, m.end, m.entity_type)
                if key in seen:
                    raise CorpusError(f"{name}/{split_name}[{i}]: duplicate mention {m}")
                seen.add(key)
            if _same_type_crossing(list(mentions)):
                msg = f"{name}/{split_name}[{i}]: same-type crossing spans are not action-encodable"
                warnings.append(msg)
                log.warning(msg)
            rows.append(
                AnnotatedSentence(Sentence(tokens, source_dataset=name), tuple(sorted(mentions)))
            )
        out_splits[split_name] = tuple(rows)
    return DatasetSpec(name=name, entity_types=types, splits=out_splits, warnings=warnings)


# --- BIO format ---------------------------------------------------------


def read_bio_file(path) -> list[tuple[list[str], list[Mention]]]:
    """Parse a word-per-line BIO file (``token<TAB>tag``, blank-line breaks).

    Contiguous B/I runs become flat mentions; an I without a preceding B opens
    a new mention (lenient repair).
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    sentences: list[tuple[list[str], list[Mention]]] = []
    tokens: list[str] = []
    tags: list[str] = []

    def flush():
        if tokens:
            sentences.append((list(tokens), _bio_to_mentions(tags, path)))
            tokens.clear()
            tags.clear()

    for raw in text.splitlines():
        line = raw.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("-DOCSTART-"):
            continue
        if "\t" in line:
            token, tag = line.split("\t", 1)
        else:
            parts = line.split()
            if len(parts) < 2:
                raise CorpusError(f"{path}: malformed line {line!r}")
            token, tag = parts[0], parts[-1]
        tokens.append(token)
        tags.append(tag.strip())
    flush()
    return sentences


def _bio_to_mentions(tags: Sequence[str], path) -> list[Mention]:
    mentions: list[Mention] = []
    start = None
    label = None
    for i, tag in enumerate(tags):
        if tag == "O":
            if start is not None:
                mentions.append(Mention(start, i - 1, label))
                start, label = None, None
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise CorpusError(f"{path}: inconsistent BIO tag {tag!r}")
        prefix, entity = tag[0], tag[2:]
        if prefix == "B" or start is None or entity != label:
            if start is not None:
                mentions.append(Mention(start, i - 1, label))
            start, label = i, entity
    if start is not None:
        mentions.append(Mention(start, len(tags) - 1, label))
    return mentions


def write_bio_file(path, sentences: Iterable[AnnotatedSentence]):
    """Write flat annotations as ``token<TAB>tag`` lines; rejects overlapping spans."""
    lines: list[str] = []
    for i, item in enumerate(sentences):
        tags = ["O"] * len(item.tokens)
        for m in sorted(item.mentions):
            if any(tags[j] != "O" for j in range(m.start, m.end + 1)):
                raise CorpusError(f"sentence {i}: overlapping mentions cannot be written as BIO")
            tags[m.start] = f"B-{m.entity_type}"
            for j in range(m.start + 1, m.end + 1):
                tags[j] = f"I-{m.entity_type}"
        lines.extend(f"{tok}\t{tag}" for tok, tag in zip(item.tokens, tags))
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


# --- nested standoff format ---------------------------------------------


def read_nested_file(path) -> list[tuple[list[str], list[Mention]]]:
    """Parse the one-JSON-object-per-line nested record format."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    sentences = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if "tokens" not in record:
            raise CorpusError(f"{path}:{lineno}: record lacks 'tokens'")
        tokens = [str(t) for t in record["tokens"]]
        mentions = [
            Mention(int(m["start"]), int(m["end"]), str(m["type"]))
            for m in record.get("mentions", [])
        ]
        sentences.append((tokens, mentions))
    return sentences


def write_nested_file(path, sentences: Iterable[AnnotatedSentence], scores: Sequence[Sequence[float]] | None = None):
    """Write nested records; ``scores`` optionally attaches one score per mention."""
    lines = []
    materialized = list(sentences)
    for i, item in enumerate(materialized):
        ms = []
        for j, m in enumerate(item.mentions):
            entry: dict = {"start": m.start, "end": m.end, "type": m.entity_type}
            if scores is not None:
                entry["score"] = round(float(scores[i][j]), 6)
            ms.append(entry)
        lines.append(json.dumps({"tokens": list(item.tokens), "mentions": ms}))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def write_predictions(path, tokens_per_sentence, scored: Sequence[Sequence[ScoredMention]]):
    sentences = []
    scores = []
    for tokens, preds in zip(tokens_per_sentence, scored):
        sentences.append(
            AnnotatedSentence(Sentence(tuple(tokens)), tuple(p.mention() for p in preds))
        )
        scores.append([p.score for p in preds])
    write_nested_file(path, sentences, scores)


# --- corpus-level loaders ------------------------------------------------


_READERS = {"bio": read_bio_file, "nested": read_nested_file}
_EXTENSIONS = {"bio": (".tsv", ".bio", ".iob", ".txt"), "nested": (".jsonl", ".json")}


def _find_split_file(directory: Path, split: str, fmt: str) -> Path | None:
    for ext in _EXTENSIONS[fmt]:
        candidate = directory / f"{split}{ext}"
        if candidate.exists():
            return candidate
    return None


def load_corpus(
    path,
    fmt: str,
    name: str | None = None,
    entity_types: Sequence[str] | None = None,
    split_paths: dict[str, str] | None = None,
) -> DatasetSpec:
    """Load a dataset from a directory of split files, a single-split file, or
    explicit per-split paths."""
    if fmt not in _READERS:
        raise CorpusError(f"unknown corpus format {fmt!r}")
    reader = _READERS[fmt]
    if split_paths is not None:
        splits = {s: reader(p) for s, p in split_paths.items()}
        return make_dataset(name or "corpus", splits, entity_types)
    path = Path(path)
    if path.is_dir():
        splits = {}
        for split in SPLIT_NAMES:
            found = _find_split_file(path, split, fmt)
            if found is not None:
                splits[split] = reader(found)
        if not splits:
            raise CorpusError(f"no train/dev/test files found in {path}")
        return make_dataset(name or path.name, splits, entity_types)
    if not path.exists():
        raise CorpusError(f"corpus path does not exist: {path}")
    return make_dataset(name or path.stem, {"train": reader(path)}, entity_types)


def read_bio_corpus(path, name: str | None = None, entity_types=None) -> DatasetSpec:
    return load_corpus(path, "bio", name, entity_types)


def read_nested_corpus(path, name: str | None = None, entity_types=None) -> DatasetSpec:
    return load_corpus(path, "nested", name, entity_types)


# --- synthetic partial-annotation split ---------------------------------


def synthetic_split(
    dataset: DatasetSpec,
    types_a: Sequence[str],
    types_b: Sequence[str],
    seed: int = 0,
) -> tuple[DatasetSpec, DatasetSpec]:
    """Randomly halve the train and dev sentences; each half keeps only the
    mentions of its assigned type set. The test split is not carried over."""
    types_a = tuple(types_a)
    types_b = tuple(types_b)
    if not types_a or not types_b:
        raise CorpusError("both sides of the type partition must be non-empty")
    if set(types_a) & set(types_b):
        raise CorpusError("type partition sides must be disjoint")
    unknown = (set(types_a) | set(types_b)) - set(dataset.entity_types)
    if unknown:
        raise CorpusError(f"partition types {sorted(unknown)} not in dataset {dataset.name!r}")

    rng = np.random.default_rng(seed)
    halves: dict[str, dict[str, list]] = {"a": {}, "b": {}}
    for split_name in ("train", "dev"):
        items = dataset.split(split_name)
        order = rng.permutation(len(items))
        cut = len(items) // 2
        side_a = [items[i] for i in order[:cut]]
        side_b = [items[i] for i in order[cut:]]
        halves["a"][split_name] = [
            (list(s.tokens), [m for m in s.mentions if m.entity_type in types_a])
            for s in side_a
        ]
        halves["b"][split_name] = [
            (list(s.tokens), [m for m in s.mentions if m.entity_type in types_b])
            for s in side_b
        ]
    name_a = f"{dataset.name}-{'+'.join(types_a)}"
    name_b = f"{dataset.name}-{'+'.join(types_b)}"
    spec_a = make_dataset(name_a, halves["a"], entity_types=types_a)
    spec_b = make_dataset(name_b, halves["b"], entity_types=types_b)
    return spec_a, spec_b


# --- statistics ----------------------------------------------------------


@dataclass
class CorpusStats:
    dataset: str
    rows: list[tuple[str, str, int]]  # (split, entity_type, mentions)
    sentences: dict[str, int]

    def to_csv(self) -> str:
        lines = ["split,entity_type,mentions"]
        lines.extend(f"{split},{label},{count}" for split, label, count in self.rows)
        return "\n".join(lines) + "\n"

    def count(self, split: str, label: str) -> int:
        for s, l, c in self.rows:
            if s == split and l == label:
                return c
        return 0


def corpus_stats(dataset: DatasetSpec) -> CorpusStats:
    """Exact per-split per-type mention counts (empty splits yield no rows)."""
    rows: list[tuple[str, str, int]] = []
    sentences: dict[str, int] = {}
    for split_name in SPLIT_NAMES:
        items = dataset.split(split_name)
        if split_name in dataset.splits:
            sentences[split_name] = len(items)
        counts: dict[str, int] = {}
        for item in items:
            for m in item.mentions:
                counts[m.entity_type] = counts.get(m.entity_type, 0) + 1
        for label in dataset.entity_types:
            if counts.get(label):
                rows.append((split_name, label, counts[label]))
    return CorpusStats(dataset=dataset.name, rows=rows, sentences=sentences)
