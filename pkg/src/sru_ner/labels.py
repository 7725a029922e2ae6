"""Label registry for multi-corpus training.

Entity types from different datasets are kept distinct by prefixing them with
the dataset name (``BC5_Chemical``); the merge map strips the prefix back to
the shared surface label. The registry also builds the action vocabulary over
the disjoint-union labels and exposes per-dataset task masks.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .actions import ActionVocabulary


class RegistryError(ValueError):
    """Unknown dataset or label, or an inconsistent registry definition."""


class LabelRegistry:
    """Disjoint-union label bookkeeping over an ordered set of datasets."""

    def __init__(self, dataset_types: Sequence[tuple[str, Sequence[str]]]):
        self._dataset_types: dict[str, tuple[str, ...]] = {}
        self._disjoint: list[str] = []
        self._merged_of: dict[str, str] = {}
        self._dataset_of: dict[str, str] = {}
        self._disjoint_of: dict[tuple[str, str], str] = {}
        for name, types in dataset_types:
            if name in self._dataset_types:
                raise RegistryError(f"duplicate dataset name {name!r}")
            types = tuple(types)
            if len(set(types)) != len(types):
                raise RegistryError(f"duplicate entity types for dataset {name!r}")
            self._dataset_types[name] = types
            for label in types:
                disjoint = f"{name}_{label}"
                if disjoint in self._merged_of:
                    raise RegistryError(f"disjoint label collision: {disjoint!r}")
                self._disjoint.append(disjoint)
                self._merged_of[disjoint] = label
                self._dataset_of[disjoint] = name
                self._disjoint_of[(name, label)] = disjoint

    @classmethod
    def from_specs(cls, specs: Iterable) -> "LabelRegistry":
        """Build from DatasetSpec-like objects exposing ``name`` and ``entity_types``."""
        return cls([(spec.name, spec.entity_types) for spec in specs])

    @property
    def dataset_names(self) -> tuple[str, ...]:
        return tuple(self._dataset_types)

    @property
    def disjoint_labels(self) -> tuple[str, ...]:
        return tuple(self._disjoint)

    @property
    def merged_labels(self) -> tuple[str, ...]:
        """Union labels in first-appearance order."""
        seen: dict[str, None] = {}
        for disjoint in self._disjoint:
            seen.setdefault(self._merged_of[disjoint], None)
        return tuple(seen)

    def types_of(self, dataset: str) -> tuple[str, ...]:
        try:
            return self._dataset_types[dataset]
        except KeyError:
            raise RegistryError(f"unknown dataset {dataset!r}") from None

    def disjoint_label(self, dataset: str, label: str) -> str:
        try:
            return self._disjoint_of[(dataset, label)]
        except KeyError:
            raise RegistryError(f"label {label!r} not declared for dataset {dataset!r}") from None

    def merged_label(self, disjoint: str) -> str:
        try:
            return self._merged_of[disjoint]
        except KeyError:
            raise RegistryError(f"unknown disjoint label {disjoint!r}") from None

    def dataset_of(self, disjoint: str) -> str:
        try:
            return self._dataset_of[disjoint]
        except KeyError:
            raise RegistryError(f"unknown disjoint label {disjoint!r}") from None

    def is_disjoint_label(self, label: str) -> bool:
        return label in self._merged_of

    def labels_for(self, dataset: str) -> tuple[str, ...]:
        return tuple(self.disjoint_label(dataset, t) for t in self.types_of(dataset))

    def vocabulary(self) -> ActionVocabulary:
        return ActionVocabulary(self._disjoint)

    def task_columns(self, dataset: str, vocab: ActionVocabulary) -> list[bool]:
        """Per-action mask: SH, EOA, and TR/RE of the dataset's own labels."""
        own = set(self.labels_for(dataset))
        mask = []
        for action in vocab.actions:
            mask.append(action.entity_type is None or action.entity_type in own)
        return mask

    def to_dict(self) -> dict:
        return {"datasets": [[name, list(types)] for name, types in self._dataset_types.items()]}

    @classmethod
    def from_dict(cls, data: dict) -> "LabelRegistry":
        return cls([(name, tuple(types)) for name, types in data["datasets"]])
