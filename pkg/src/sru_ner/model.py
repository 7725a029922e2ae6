"""The assembled recognizer (encoder + slot memory + action generator) with
prediction helpers and the self-describing checkpoint format."""

from __future__ import annotations

from pathlib import Path

import torch
from torch import nn

from .actions import (
    DecodeDiagnostics,
    Mention,
    ScoredMention,
    Sentence,
    decode_probabilities_scored,
)
from .config import ExperimentConfig
from .encoding import EncoderAdapter, build_encoder, encode_sentence
from .generator import ActionGenerator, GenerationResult
from .labels import LabelRegistry
from .sru import SlotRecurrentUnit

CHECKPOINT_FORMAT = "sru-ner-checkpoint"


class CheckpointError(ValueError):
    """Unreadable or structurally invalid checkpoint file."""


class SruNerModel(nn.Module):
    def __init__(self, encoder: EncoderAdapter, generator: ActionGenerator,
                 registry: LabelRegistry, config: ExperimentConfig):
        super().__init__()
        self.encoder = encoder
        self.generator = generator
        self.registry = registry
        self.config = config
        self.vocab = registry.vocabulary()

    @classmethod
    def build(cls, config: ExperimentConfig, registry: LabelRegistry) -> "SruNerModel":
        """Construct all modules; seed torch beforehand for reproducible init."""
        encoder = build_encoder(config.encoder, seed=config.training.seed)
        vocab = registry.vocabulary()
        sru = SlotRecurrentUnit(d=encoder.d_enc, n_actions=len(vocab), config=config.sru)
        generator = ActionGenerator(
            n_actions=len(vocab),
            d_enc=encoder.d_enc,
            sru=sru,
            config=config.generator,
            shift_index=vocab.shift_index,
            eoa_index=vocab.eoa_index,
        )
        return cls(encoder, generator, registry, config)

    def head_parameters(self):
        """Everything trained by the action-cycle optimizer (SRU, generator, embeddings)."""
        return self.generator.parameters()

    def generate(self, sentence: Sentence, mode: str = "inference", gold=None) -> GenerationResult:
        encoded = encode_sentence(sentence, self.encoder)
        return self.generator.generate(encoded, mode=mode, gold=gold)

    def predict_scored(self, sentence: Sentence,
                       diagnostics: DecodeDiagnostics | None = None) -> list[ScoredMention]:
        """Greedy inference + thresholded decoding; returns disjoint-union-typed mentions."""
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                result = self.generate(sentence, mode="inference")
                probs = torch.sigmoid(result.logits).cpu().numpy()
        finally:
            self.train(was_training)
        if diagnostics is not None:
            diagnostics.excess_shifts += result.excess_shifts
        return decode_probabilities_scored(probs, sentence, self.vocab, diagnostics)

    def predict(self, sentence: Sentence) -> list[Mention]:
        return [s.mention() for s in self.predict_scored(sentence)]


def merge_scored_predictions(scored, registry: LabelRegistry) -> list[ScoredMention]:
    """Map disjoint-union types to shared labels; identical spans collapse to
    the highest-scoring candidate."""
    best: dict[tuple[int, int, str], ScoredMention] = {}
    for s in scored:
        merged = ScoredMention(s.start, s.end, registry.merged_label(s.entity_type), s.score)
        key = (merged.start, merged.end, merged.entity_type)
        if key not in best or merged.score > best[key].score:
            best[key] = merged
    return sorted(best.values(), key=lambda s: (s.start, s.end, s.entity_type))


def save_checkpoint(model: SruNerModel, path, extra: dict | None = None):
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "config": model.config.to_dict(),
        "registry": model.registry.to_dict(),
        "state_dict": model.state_dict(),
    }
    if extra:
        payload["extra"] = extra
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path) -> SruNerModel:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint does not exist: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a recognizer checkpoint")
    config = ExperimentConfig.from_dict(payload["config"])
    registry = LabelRegistry.from_dict(payload["registry"])
    model = SruNerModel.build(config, registry)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
