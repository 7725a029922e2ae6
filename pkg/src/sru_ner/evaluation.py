"""Mention-level exact-match micro metrics under the two evaluation scenarios.

Disjoint: keep only predictions whose dataset-prefixed type belongs to the
test sentence's source dataset, then match (start, end, type) exactly.
Merged: strip dataset prefixes from predicted types, discard mapped types the
source dataset does not annotate, deduplicate identical spans, then match.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .actions import Mention
from .labels import LabelRegistry

SCENARIOS = ("disjoint", "merged")


class EvaluationError(ValueError):
    """Inputs outside the evaluation contract (unknown labels, bad scenario)."""


@dataclass
class TypeCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "TypeCounts"):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class EvalReport:
    scenario: str
    per_type: dict[str, TypeCounts] = field(default_factory=dict)

    @property
    def tp(self) -> int:
        return sum(c.tp for c in self.per_type.values())

    @property
    def fp(self) -> int:
        return sum(c.fp for c in self.per_type.values())

    @property
    def fn(self) -> int:
        return sum(c.fn for c in self.per_type.values())

    @property
    def precision(self) -> float:
        return precision_recall_f1(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return precision_recall_f1(self.tp, self.fp, self.fn)[1]

    @property
    def micro_f1(self) -> float:
        return precision_recall_f1(self.tp, self.fp, self.fn)[2]

    def counts(self, label: str) -> TypeCounts:
        return self.per_type.setdefault(label, TypeCounts())

    def add(self, other: "EvalReport"):
        if other.scenario != self.scenario:
            raise EvaluationError("cannot merge reports from different scenarios")
        for label, counts in other.per_type.items():
            self.counts(label).add(counts)

    def to_dict(self) -> dict:
        per_type = {}
        for label in sorted(self.per_type):
            c = self.per_type[label]
            p, r, f1 = precision_recall_f1(c.tp, c.fp, c.fn)
            per_type[label] = {
                "tp": c.tp, "fp": c.fp, "fn": c.fn,
                "precision": p, "recall": r, "f1": f1,
            }
        return {
            "scenario": self.scenario,
            "types": per_type,
            "overall": {
                "tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall,
                "micro_f1": self.micro_f1,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        rows = [("type", "TP", "FP", "FN", "P", "R", "F1")]
        for label in sorted(self.per_type):
            c = self.per_type[label]
            p, r, f1 = precision_recall_f1(c.tp, c.fp, c.fn)
            rows.append((label, str(c.tp), str(c.fp), str(c.fn),
                         f"{p:.4f}", f"{r:.4f}", f"{f1:.4f}"))
        rows.append(("ALL", str(self.tp), str(self.fp), str(self.fn),
                     f"{self.precision:.4f}", f"{self.recall:.4f}", f"{self.micro_f1:.4f}"))
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
        return "\n".join(lines)


def _match(pred: set[tuple[int, int, str]], gold: set[tuple[int, int, str]],
           scenario: str) -> EvalReport:
    report = EvalReport(scenario=scenario)
    for span in pred | gold:
        counts = report.counts(span[2])
        if span in pred and span in gold:
            counts.tp += 1
        elif span in pred:
            counts.fp += 1
        else:
            counts.fn += 1
    return report


def _gold_spans(gold: Sequence[Mention], source_dataset: str,
                registry: LabelRegistry) -> set[tuple[int, int, str]]:
    allowed = set(registry.types_of(source_dataset))
    spans = set()
    for m in gold:
        if m.entity_type not in allowed:
            raise EvaluationError(
                f"gold mention type {m.entity_type!r} is not a {source_dataset!r} type"
            )
        spans.add((m.start, m.end, m.entity_type))
    return spans


def evaluate_disjoint(pred: Sequence[Mention], gold: Sequence[Mention],
                      source_dataset: str, registry: LabelRegistry) -> EvalReport:
    """Exact matching after discarding predictions from other datasets.

    Predictions carry disjoint-union (dataset-prefixed) types; gold mentions
    carry the source dataset's own types.
    """
    kept = set()
    for m in pred:
        if not registry.is_disjoint_label(m.entity_type):
            raise EvaluationError(f"prediction type {m.entity_type!r} is not a known disjoint label")
        if registry.dataset_of(m.entity_type) == source_dataset:
            kept.add((m.start, m.end, registry.merged_label(m.entity_type)))
    return _match(kept, _gold_spans(gold, source_dataset, registry), "disjoint")


def evaluate_merged(pred: Sequence[Mention], gold: Sequence[Mention],
                    source_dataset: str, registry: LabelRegistry) -> EvalReport:
    """Exact matching after mapping predicted types to their shared surface
    labels; spans whose mapped type the source dataset does not annotate are
    discarded, and identical mapped spans collapse to one candidate."""
    allowed = set(registry.types_of(source_dataset))
    kept = set()
    for m in pred:
        if registry.is_disjoint_label(m.entity_type):
            mapped = registry.merged_label(m.entity_type)
        elif m.entity_type in registry.merged_labels:
            mapped = m.entity_type  # already-merged input (e.g. merged predict output)
        else:
            raise EvaluationError(f"prediction type {m.entity_type!r} is not a known label")
        if mapped in allowed:
            kept.add((m.start, m.end, mapped))
    return _match(kept, _gold_spans(gold, source_dataset, registry), "merged")


def evaluate_sentence(pred, gold, source_dataset, registry, scenario: str) -> EvalReport:
    if scenario == "disjoint":
        return evaluate_disjoint(pred, gold, source_dataset, registry)
    if scenario == "merged":
        return evaluate_merged(pred, gold, source_dataset, registry)
    raise EvaluationError(f"unknown scenario {scenario!r}")


def evaluate_corpus(pairs: Iterable[tuple[Sequence[Mention], Sequence[Mention]]],
                    source_dataset: str, registry: LabelRegistry,
                    scenario: str) -> EvalReport:
    """Micro aggregation of per-sentence reports over (pred, gold) pairs."""
    total = EvalReport(scenario=scenario)
    for pred, gold in pairs:
        total.add(evaluate_sentence(pred, gold, source_dataset, registry, scenario))
    return total
