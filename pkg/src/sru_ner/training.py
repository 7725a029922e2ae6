"""Multi-corpus training: gold action matrices with dynamic augmentation,
masked BCE loss, inverse-size dataset sampling, dual AdamW optimizers with
linear warmup, and merged-mode checkpoint selection.

The loss treats TR/RE columns of other datasets as unsupervised: their gold
cells are overwritten each step with the model's own (detached) probabilities,
so their BCE terms carry exactly zero gradient. When the model outscores SH
with an out-of-task action on a gold shift row, the shift is deferred: the SH
cell softens to its own probability and a fresh one-hot SH row is inserted
right after, keeping one logit row aligned to every gold row.
"""

from __future__ import annotations

import copy
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .actions import ActionVocabulary, Mention, Sentence, encode_mentions
from .config import ExperimentConfig
from .corpus import AnnotatedSentence, DatasetSpec
from .encoding import SentenceTooLongError, encode_sentence
from .evaluation import EvalReport, evaluate_corpus
from .labels import LabelRegistry
from .model import SruNerModel

log = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    """Training produced a NaN or infinite loss."""


class GoldActionMatrix:
    """Multi-hot gold rows over the full action vocabulary, mutated in place
    during the generation cycle (out-of-task softening and SH-delay rows)."""

    def __init__(self, rows: list[torch.Tensor], hard_shift: list[bool],
                 task_mask: Sequence[bool], shift_index: int, eoa_index: int):
        self._rows = rows
        self._hard_shift = hard_shift
        self.task_mask = tuple(bool(b) for b in task_mask)
        self.shift_index = shift_index
        self.eoa_index = eoa_index
        out = [i for i, in_task in enumerate(self.task_mask) if not in_task]
        self._out_cols = torch.tensor(out, dtype=torch.long)
        self.initial_rows = len(rows)
        self.origins: list[int | None] = list(range(len(rows)))  # None marks inserted rows
        self.inserted_rows = 0
        self.insertion_blocked = False

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def row(self, t: int) -> torch.Tensor:
        return self._rows[t]

    def is_hard_shift(self, t: int) -> bool:
        return self._hard_shift[t]

    def tensor(self) -> torch.Tensor:
        return torch.stack(self._rows)

    def augment(self, t: int, u_row: torch.Tensor, allow_insert: bool = True):
        """Fold the model's step-t decisions on other datasets' actions into row t.

        Out-of-task cells become sigmoid(u) (as constants). On a hard SH row
        where some out-of-task logit beats the SH logit, the SH cell also
        becomes sigmoid(u_SH) and a one-hot SH row is inserted after t.
        """
        u = u_row.detach()
        row = self._rows[t]
        if self._out_cols.numel():
            row[self._out_cols] = torch.sigmoid(u[self._out_cols])
            if self._hard_shift[t] and bool((u[self._out_cols] > u[self.shift_index]).any()):
                if allow_insert:
                    row[self.shift_index] = torch.sigmoid(u[self.shift_index])
                    self._hard_shift[t] = False
                    inserted = torch.zeros_like(row)
                    inserted[self.shift_index] = 1.0
                    self._rows.insert(t + 1, inserted)
                    self._hard_shift.insert(t + 1, True)
                    self.origins.insert(t + 1, None)
                    self.inserted_rows += 1
                else:
                    self.insertion_blocked = True

    def is_inserted(self, t: int) -> bool:
        return self.origins[t] is None


def build_gold_matrix(sentence: Sentence, mentions: Sequence[Mention],
                      registry: LabelRegistry,
                      vocab: ActionVocabulary | None = None) -> GoldActionMatrix:
    """Encode the gold mentions over the disjoint-union vocabulary and pack
    the actions into multi-hot rows.

    SH and EOA each occupy their own row. Runs of consecutive TR (or RE)
    actions share one row, except that a repeated action column starts a new
    row (a multi-hot row cannot express the same action twice); an RE run
    followed by a TR run stays two rows.
    """
    if sentence.source_dataset is None:
        raise ValueError("sentence has no source dataset; cannot build gold matrix")
    vocab = vocab or registry.vocabulary()
    dataset = sentence.source_dataset
    prefixed = [
        Mention(m.start, m.end, registry.disjoint_label(dataset, m.entity_type))
        for m in mentions
    ]
    sequence = encode_mentions(sentence, prefixed, vocab)

    rows: list[torch.Tensor] = []
    hard_shift: list[bool] = []
    run_cols: list[int] = []
    run_kind: str | None = None

    def flush_run():
        nonlocal run_cols, run_kind
        if run_cols:
            row = torch.zeros(len(vocab))
            row[run_cols] = 1.0
            rows.append(row)
            hard_shift.append(False)
        run_cols = []
        run_kind = None

    for action in sequence:
        if action.kind in ("SH", "EOA"):
            flush_run()
            row = torch.zeros(len(vocab))
            row[vocab.index(action)] = 1.0
            rows.append(row)
            hard_shift.append(action.kind == "SH")
        else:
            col = vocab.index(action)
            if run_kind != action.kind or col in run_cols:
                flush_run()
                run_kind = action.kind
            run_cols.append(col)
    flush_run()

    return GoldActionMatrix(
        rows=rows,
        hard_shift=hard_shift,
        task_mask=registry.task_columns(dataset, vocab),
        shift_index=vocab.shift_index,
        eoa_index=vocab.eoa_index,
    )


def augment_gold(gold: GoldActionMatrix, u_row: torch.Tensor, t: int,
                 allow_insert: bool = True):
    gold.augment(t, u_row, allow_insert=allow_insert)


def sample_loss(logits: torch.Tensor, gold) -> torch.Tensor:
    """Mean over rows of the mean-over-actions BCE between sigmoid(u) and G."""
    target = gold.tensor() if isinstance(gold, GoldActionMatrix) else gold
    if logits.shape != target.shape:
        raise ValueError(f"logit rows {tuple(logits.shape)} != gold rows {tuple(target.shape)}")
    return F.binary_cross_entropy_with_logits(logits, target.detach(), reduction="mean")


class InverseSizeSampler:
    """Epoch sampling: dataset picked with probability proportional to 1/size,
    then a uniform sentence; epoch length is the mean dataset size."""

    def __init__(self, sizes: Sequence[int], seed: int = 0):
        if not sizes or any(s <= 0 for s in sizes):
            raise ValueError("every dataset must be non-empty")
        self.sizes = tuple(int(s) for s in sizes)
        self.seed = seed
        inverse = np.array([1.0 / s for s in self.sizes])
        self.probabilities = inverse / inverse.sum()
        self.epoch_length = int(math.floor(sum(self.sizes) / len(self.sizes) + 0.5))

    def epoch(self, epoch_index: int = 0) -> list[tuple[int, int]]:
        rng = np.random.default_rng((self.seed, epoch_index))
        datasets = rng.choice(len(self.sizes), size=self.epoch_length, p=self.probabilities)
        highs = np.asarray(self.sizes)[datasets]
        sentences = rng.integers(0, highs)
        return list(zip(datasets.tolist(), sentences.tolist()))

    def draw_datasets(self, n: int, stream: int = 0) -> np.ndarray:
        rng = np.random.default_rng((self.seed, 0xD0A5, stream))
        return rng.choice(len(self.sizes), size=n, p=self.probabilities)


def dataset_sampler(datasets: Sequence[DatasetSpec], seed: int = 0) -> InverseSizeSampler:
    return InverseSizeSampler([len(ds.train) for ds in datasets], seed=seed)


@dataclass
class EpochMetrics:
    epoch: int
    split: str
    precision: float
    recall: float
    f1: float
    loss: float


@dataclass
class TrainResult:
    model: SruNerModel
    registry: LabelRegistry
    history: list[EpochMetrics]
    best_epoch: int
    best_dev_f1: float
    stopped_early: bool
    skipped_sentences: int


def write_metrics_csv(history: Sequence[EpochMetrics], path):
    lines = ["epoch,split,micro_P,micro_R,micro_F1,loss"]
    for row in history:
        lines.append(
            f"{row.epoch},{row.split},{row.precision!r},{row.recall!r},{row.f1!r},{row.loss!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _trainable(sentence: Sentence, mentions, vocab: ActionVocabulary,
               registry: LabelRegistry, encoder, max_tokens: int) -> bool:
    if len(sentence) > max_tokens:
        return False
    pieces = encoder.subword_tokens(sentence.tokens)
    if 2 + sum(len(p) for p in pieces) > encoder.max_subwords:
        return False
    try:
        prefixed = [
            Mention(m.start, m.end, registry.disjoint_label(sentence.source_dataset, m.entity_type))
            for m in mentions
        ]
        encode_mentions(sentence, prefixed, vocab)
    except ValueError:
        return False
    return True


def _seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def _evaluate_model(model: SruNerModel, corpora: Sequence[DatasetSpec], split: str,
                    registry: LabelRegistry) -> EvalReport | None:
    total = EvalReport(scenario="merged")
    seen = False
    for ds in corpora:
        items = ds.split(split)
        if not items:
            continue
        seen = True
        pairs = []
        for item in items:
            try:
                preds = model.predict(item.sentence)
            except SentenceTooLongError:
                # unencodable sentences still count: no predictions, gold as FNs
                preds = []
            pairs.append((preds, item.mentions))
        total.add(evaluate_corpus(pairs, ds.name, registry, "merged"))
    return total if seen else None


def _split_loss(model: SruNerModel, datasets: list[list[AnnotatedSentence]],
                registry: LabelRegistry, vocab: ActionVocabulary) -> float:
    losses = []
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for items in datasets:
            for item in items:
                try:
                    gold = build_gold_matrix(item.sentence, item.mentions, registry, vocab)
                    encoded = encode_sentence(item.sentence, model.encoder)
                except (ValueError, SentenceTooLongError):
                    continue  # teacher forcing needs an encodable gold schedule
                result = model.generator.generate(encoded, mode="training", gold=gold)
                losses.append(float(sample_loss(result.logits, gold)))
    model.train(was_training)
    return float(np.mean(losses)) if losses else float("nan")


def _warmup_lambda(warmup_steps: int) -> Callable[[int], float]:
    steps = max(1, warmup_steps)
    return lambda step: min(1.0, (step + 1) / steps)


def train(corpora: Sequence[DatasetSpec], config: ExperimentConfig,
          registry: LabelRegistry | None = None,
          on_epoch: Callable[[EpochMetrics], None] | None = None) -> TrainResult:
    """Run the full training loop and return the best-dev model.

    Checkpoint selection and early stopping use merged-mode micro-F1 over all
    dev splits (falling back to the train split when no dataset has one).
    Raises ``NonFiniteLossError`` if a batch loss is NaN or infinite.
    """
    tc = config.training
    _seed_everything(tc.seed)
    torch.set_num_threads(1)  # keeps reductions bit-reproducible across runs

    registry = registry or LabelRegistry.from_specs(corpora)
    model = SruNerModel.build(config, registry)
    vocab = model.vocab

    train_sets: list[list[AnnotatedSentence]] = []
    skipped = 0
    for ds in corpora:
        kept = []
        for item in ds.train:
            if _trainable(item.sentence, item.mentions, vocab, registry, model.encoder, tc.max_tokens):
                kept.append(item)
            else:
                skipped += 1
        if not kept:
            raise ValueError(f"dataset {ds.name!r} has no trainable sentences")
        train_sets.append(kept)
    if skipped:
        log.warning("skipped %d sentences (too long or not action-encodable)", skipped)

    sampler = InverseSizeSampler([len(items) for items in train_sets], seed=tc.seed)
    steps_per_epoch = max(1, math.ceil(sampler.epoch_length / tc.batch_size))

    betas = (tc.adam_beta1, tc.adam_beta2)
    encoder_params = [p for p in model.encoder.parameters() if p.requires_grad]
    head_params = [p for p in model.head_parameters() if p.requires_grad]
    opt_encoder = torch.optim.AdamW(
        encoder_params, lr=tc.encoder_lr, weight_decay=tc.encoder_weight_decay,
        betas=betas, eps=tc.adam_eps,
    )
    opt_head = torch.optim.AdamW(
        head_params, lr=tc.head_lr, weight_decay=tc.head_weight_decay,
        betas=betas, eps=tc.adam_eps,
    )
    sched_encoder = torch.optim.lr_scheduler.LambdaLR(
        opt_encoder, _warmup_lambda(round(tc.encoder_warmup_epochs * steps_per_epoch))
    )
    sched_head = torch.optim.lr_scheduler.LambdaLR(
        opt_head, _warmup_lambda(round(tc.head_warmup_epochs * steps_per_epoch))
    )

    dev_sets = [list(ds.dev) for ds in corpora]
    have_dev = any(dev_sets)
    if not have_dev:
        log.warning("no dev split found; selecting checkpoints on the train split")

    history: list[EpochMetrics] = []
    best_f1 = -1.0
    best_epoch = 0
    best_state = copy.deepcopy(model.state_dict())
    bad_epochs = 0
    stopped_early = False

    for epoch in range(1, tc.epochs + 1):
        model.train()
        batch_losses: list[float] = []
        draws = sampler.epoch(epoch)
        for start in range(0, len(draws), tc.batch_size):
            batch = draws[start:start + tc.batch_size]
            losses = []
            for ds_index, sent_index in batch:
                item = train_sets[ds_index][sent_index]
                gold = build_gold_matrix(item.sentence, item.mentions, registry, vocab)
                encoded = encode_sentence(item.sentence, model.encoder)
                result = model.generator.generate(encoded, mode="training", gold=gold)
                losses.append(sample_loss(result.logits, gold))
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch}")
            opt_encoder.zero_grad()
            opt_head.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(encoder_params + head_params, tc.grad_clip)
            opt_encoder.step()
            opt_head.step()
            sched_encoder.step()
            sched_head.step()
            batch_losses.append(float(loss.detach()))

        train_loss = float(np.mean(batch_losses))
        train_report = _evaluate_model(model, corpora, "train", registry)
        rows = [EpochMetrics(epoch, "train", train_report.precision,
                             train_report.recall, train_report.micro_f1, train_loss)]
        if have_dev:
            dev_report = _evaluate_model(model, corpora, "dev", registry)
            dev_loss = _split_loss(model, dev_sets, registry, vocab)
            rows.append(EpochMetrics(epoch, "dev", dev_report.precision,
                                     dev_report.recall, dev_report.micro_f1, dev_loss))
            selection_f1 = dev_report.micro_f1
        else:
            selection_f1 = train_report.micro_f1
        history.extend(rows)
        if on_epoch:
            for row in rows:
                on_epoch(row)

        if selection_f1 > best_f1:
            best_f1 = selection_f1
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= tc.patience:
                stopped_early = True
                break

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(
        model=model,
        registry=registry,
        history=history,
        best_epoch=best_epoch,
        best_dev_f1=best_f1,
        stopped_early=stopped_early,
        skipped_sentences=skipped,
    )
