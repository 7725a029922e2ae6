"""Command-line surface: train, predict, evaluate, encode-actions, split, stats.

Every subcommand is a thin shell over the library. Config and corpus problems
exit with code 2 and a single machine-readable JSON error line on stderr; the
``--min-f1`` gate on ``evaluate`` exits 1 when the score falls short.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from .actions import ActionVocabulary, CodecError, Sentence, encode_mentions
from .config import ConfigError, ExperimentConfig, load_config
from .corpus import (
    CorpusError,
    DatasetSpec,
    corpus_stats,
    load_corpus,
    read_nested_file,
    synthetic_split,
    write_nested_file,
    write_predictions,
)
from .evaluation import EvaluationError, evaluate_corpus
from .labels import LabelRegistry, RegistryError
from .model import CheckpointError, load_checkpoint, merge_scored_predictions, save_checkpoint
from .training import EpochMetrics, NonFiniteLossError, train, write_metrics_csv

RUN_DIR_ENV = "SRU_NER_RUN_DIR"

_USER_ERRORS = (
    ConfigError,
    CorpusError,
    CodecError,
    CheckpointError,
    EvaluationError,
    RegistryError,
    NonFiniteLossError,
)


def _fail(command: str, message: str) -> int:
    print(json.dumps({"error": message, "command": command}), file=sys.stderr)
    return 2


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _load_datasets(config: ExperimentConfig) -> tuple[list[DatasetSpec], dict[str, str]]:
    if not config.datasets:
        raise ConfigError("config declares no datasets")
    specs = []
    fingerprints: dict[str, str] = {}
    for entry in config.datasets:
        paths = entry.split_paths()
        for split, path in paths.items():
            if not Path(path).exists():
                raise CorpusError(f"missing corpus path: {path}")
            fingerprints[path] = _sha256(Path(path))
        specs.append(
            load_corpus(None, entry.format, name=entry.name,
                        entity_types=entry.types, split_paths=paths)
        )
    return specs, fingerprints


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.training.seed = args.seed
    run_dir = Path(os.environ.get(RUN_DIR_ENV) or config.run_dir or "runs/default")
    run_dir.mkdir(parents=True, exist_ok=True)

    corpora, fingerprints = _load_datasets(config)
    started = time.strftime("%Y-%m-%dT%H:%M:%S")

    def log_epoch(row: EpochMetrics):
        print(f"[epoch {row.epoch:3d}] {row.split:5s} "
              f"P={row.precision:.4f} R={row.recall:.4f} F1={row.f1:.4f} loss={row.loss:.6f}",
              flush=True)

    result = train(corpora, config, on_epoch=None if args.quiet else log_epoch)

    checkpoint_path = run_dir / "checkpoint.pt"
    save_checkpoint(result.model, checkpoint_path,
                    extra={"best_epoch": result.best_epoch, "best_dev_f1": result.best_dev_f1})
    write_metrics_csv(result.history, run_dir / "metrics.csv")
    (run_dir / "registry.json").write_text(
        json.dumps(result.registry.to_dict(), indent=2), encoding="utf-8"
    )
    manifest = {
        "config": config.to_dict(),
        "seed": config.training.seed,
        "corpus_fingerprints": fingerprints,
        "checkpoint": str(checkpoint_path),
        "started_at": started,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "best_epoch": result.best_epoch,
        "best_dev_f1": result.best_dev_f1,
        "skipped_sentences": result.skipped_sentences,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    print(f"best dev F1 {result.best_dev_f1:.4f} at epoch {result.best_epoch}; "
          f"artifacts in {run_dir}")
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    records = read_nested_file(args.input)
    tokens_out = []
    scored_out = []
    for tokens, _ in records:
        scored = model.predict_scored(Sentence(tuple(tokens)))
        if args.scenario == "merged":
            scored = merge_scored_predictions(scored, model.registry)
        tokens_out.append(tokens)
        scored_out.append(scored)
    write_predictions(args.output, tokens_out, scored_out)
    print(f"wrote {len(tokens_out)} sentences to {args.output}")
    return 0


def _registry_for_eval(args) -> LabelRegistry:
    if args.registry:
        data = json.loads(Path(args.registry).read_text(encoding="utf-8"))
        return LabelRegistry.from_dict(data)
    if args.checkpoint:
        return load_checkpoint(args.checkpoint).registry
    raise ConfigError("evaluate requires --registry or --checkpoint for the label registry")


def cmd_evaluate(args) -> int:
    pred_records = read_nested_file(args.pred)
    gold_records = read_nested_file(args.gold)
    if len(pred_records) != len(gold_records):
        raise EvaluationError(
            f"prediction file has {len(pred_records)} sentences, gold has {len(gold_records)}"
        )
    for i, ((pt, _), (gt, _)) in enumerate(zip(pred_records, gold_records)):
        if pt != gt:
            raise EvaluationError(f"token mismatch between pred and gold at sentence {i}")
    registry = _registry_for_eval(args)
    pairs = [(pm, gm) for (_, pm), (_, gm) in zip(pred_records, gold_records)]
    report = evaluate_corpus(pairs, args.source_dataset, registry, args.scenario)

    json_text = report.to_json()
    table_text = report.to_table()
    if args.output_json:
        Path(args.output_json).write_text(json_text + "\n", encoding="utf-8")
    if args.output_table:
        Path(args.output_table).write_text(table_text + "\n", encoding="utf-8")
    print(table_text)
    if not args.output_json:
        print(json_text)
    if args.min_f1 is not None and report.micro_f1 < args.min_f1:
        print(f"micro-F1 {report.micro_f1:.4f} below gate {args.min_f1}", file=sys.stderr)
        return 1
    return 0


def cmd_encode_actions(args) -> int:
    records = read_nested_file(args.input)
    if args.types:
        vocab = ActionVocabulary([t for t in args.types.split(",") if t])
    else:
        observed = sorted({m.entity_type for _, mentions in records for m in mentions})
        vocab = ActionVocabulary(observed)
    lines = []
    for i, (tokens, mentions) in enumerate(records):
        try:
            seq = encode_mentions(Sentence(tuple(tokens)), mentions, vocab)
        except CodecError as exc:
            raise CodecError(f"sentence {i}: {exc}") from exc
        lines.append(seq.serialize())
    text = "\n".join(lines)
    if args.output:
        Path(args.output).write_text(text + ("\n" if text else ""), encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_split(args) -> int:
    spec = load_corpus(args.input, args.format, name=args.name)
    half_a, half_b = synthetic_split(
        spec, args.types_a.split(","), args.types_b.split(","), seed=args.seed
    )
    out_root = Path(args.output_dir)
    for half in (half_a, half_b):
        directory = out_root / half.name
        directory.mkdir(parents=True, exist_ok=True)
        for split_name in ("train", "dev"):
            write_nested_file(directory / f"{split_name}.jsonl", half.split(split_name))
        print(f"{half.name}: train={len(half.train)} dev={len(half.dev)} -> {directory}")
    return 0


def cmd_stats(args) -> int:
    spec = load_corpus(args.input, args.format, name=args.name)
    stats = corpus_stats(spec)
    csv_text = stats.to_csv()
    if args.output:
        Path(args.output).write_text(csv_text, encoding="utf-8")
    else:
        print(csv_text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sru-ner",
        description="Transition-based nested NER with slot-memory action generation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON config")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--seed", type=int, default=None, help="override config seed")
    p_train.add_argument("--quiet", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="annotate a nested-record corpus")
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--input", required=True)
    p_pred.add_argument("--output", required=True)
    p_pred.add_argument("--scenario", choices=("disjoint", "merged"), default="disjoint")
    p_pred.set_defaults(func=cmd_predict)

    p_eval = sub.add_parser("evaluate", help="score predictions against gold")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gold", required=True)
    p_eval.add_argument("--scenario", choices=("disjoint", "merged"), required=True)
    p_eval.add_argument("--source-dataset", required=True)
    p_eval.add_argument("--registry", default=None, help="registry.json from a training run")
    p_eval.add_argument("--checkpoint", default=None, help="checkpoint carrying the registry")
    p_eval.add_argument("--min-f1", type=float, default=None, help="CI gate; exit 1 below this")
    p_eval.add_argument("--output-json", default=None)
    p_eval.add_argument("--output-table", default=None)
    p_eval.set_defaults(func=cmd_evaluate)

    p_enc = sub.add_parser("encode-actions", help="print action sequences for gold records")
    p_enc.add_argument("--input", required=True)
    p_enc.add_argument("--types", default=None, help="comma-separated label order")
    p_enc.add_argument("--output", default=None)
    p_enc.set_defaults(func=cmd_encode_actions)

    p_split = sub.add_parser("split", help="synthetic partial-annotation split")
    p_split.add_argument("--input", required=True)
    p_split.add_argument("--format", choices=("nested", "bio"), default="nested")
    p_split.add_argument("--types-a", required=True)
    p_split.add_argument("--types-b", required=True)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--output-dir", required=True)
    p_split.add_argument("--name", default=None)
    p_split.set_defaults(func=cmd_split)

    p_stats = sub.add_parser("stats", help="per-split per-type mention counts as CSV")
    p_stats.add_argument("--input", required=True)
    p_stats.add_argument("--format", choices=("nested", "bio"), default="nested")
    p_stats.add_argument("--name", default=None)
    p_stats.add_argument("--output", default=None)
    p_stats.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        return _fail(args.command, str(exc))
    except FileNotFoundError as exc:
        return _fail(args.command, f"missing path: {exc.filename}")


if __name__ == "__main__":
    sys.exit(main())
