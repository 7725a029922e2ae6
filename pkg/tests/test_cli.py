from __future__ import annotations

import json
from pathlib import Path

import pytest

from sru_ner.cli import main
from sru_ner.corpus import read_nested_file, write_nested_file
from sru_ner.evaluation import evaluate_corpus
from sru_ner.labels import LabelRegistry
from sru_ner.actions import Mention, Sentence
from sru_ner.corpus import AnnotatedSentence
from helpers import toy_corpus_root


def _write_tiny_config(tmp_path: Path, epochs=2, run_dir=None, seed=3) -> Path:
    root = toy_corpus_root()
    config = {
        "run_dir": str(run_dir or tmp_path / "run"),
        "datasets": [
            {
                "name": "alpha",
                "format": "nested",
                "train": str(root / "alpha" / "train.jsonl"),
                "dev": str(root / "alpha" / "dev.jsonl"),
                "types": ["Agent", "Site"],
            },
            {
                "name": "beta",
                "format": "nested",
                "train": str(root / "beta" / "train.jsonl"),
                "dev": str(root / "beta" / "dev.jsonl"),
                "types": ["Event"],
            },
        ],
        "encoder": {"kind": "toy", "d_enc": 16, "buckets": 256},
        "sru": {"half_context": 12, "latent_dropout": 0.0, "position_dropout": 0.0},
        "generator": {"hidden": 32, "logit_dropout": 0.0},
        "training": {
            "epochs": epochs,
            "patience": epochs,
            "batch_size": 4,
            "encoder_lr": 0.005,
            "head_lr": 0.005,
            "seed": seed,
        },
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli_train")
    config = _write_tiny_config(tmp_path)
    assert main(["train", "--config", str(config), "--quiet"]) == 0
    return tmp_path / "run"


def test_train_writes_artifacts(trained_run):
    assert (trained_run / "checkpoint.pt").exists()
    assert (trained_run / "manifest.json").exists()
    assert (trained_run / "registry.json").exists()
    metrics = (trained_run / "metrics.csv").read_text().splitlines()
    assert metrics[0] == "epoch,split,micro_P,micro_R,micro_F1,loss"
    assert len(metrics) == 1 + 2 * 2  # train + dev rows for two epochs
    manifest = json.loads((trained_run / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert len(manifest["corpus_fingerprints"]) == 4
    assert all(len(v) == 64 for v in manifest["corpus_fingerprints"].values())


def test_train_missing_corpus_exits_2(tmp_path, capsys):
    config = _write_tiny_config(tmp_path)
    data = json.loads(config.read_text())
    data["datasets"][0]["train"] = str(tmp_path / "nowhere.jsonl")
    config.write_text(json.dumps(data))
    code = main(["train", "--config", str(config), "--quiet"])
    captured = capsys.readouterr()
    assert code == 2
    error = json.loads(captured.err.strip())
    assert "nowhere.jsonl" in error["error"]


def test_train_bad_config_key_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"training": {"lr": 1}}))
    assert main(["train", "--config", str(path)]) == 2
    assert "unknown keys" in json.loads(capsys.readouterr().err.strip())["error"]


def test_predict_roundtrip(trained_run, tmp_path):
    out = tmp_path / "pred.jsonl"
    code = main([
        "predict", "--checkpoint", str(trained_run / "checkpoint.pt"),
        "--input", str(toy_corpus_root() / "alpha" / "train.jsonl"),
        "--output", str(out),
    ])
    assert code == 0
    records = read_nested_file(out)
    assert len(records) == 4
    for _, mentions in records:
        for m in mentions:
            assert m.entity_type.startswith(("alpha_", "beta_"))
    # every written mention carries its confidence score
    for line in out.read_text().splitlines():
        for entry in json.loads(line)["mentions"]:
            assert 0.0 <= entry["score"] <= 1.0


def test_predict_merged_strips_prefixes(trained_run, tmp_path):
    out = tmp_path / "pred_merged.jsonl"
    main([
        "predict", "--checkpoint", str(trained_run / "checkpoint.pt"),
        "--input", str(toy_corpus_root() / "alpha" / "train.jsonl"),
        "--output", str(out), "--scenario", "merged",
    ])
    for _, mentions in read_nested_file(out):
        for m in mentions:
            assert m.entity_type in ("Agent", "Site", "Event")


def test_predict_empty_input(trained_run, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    out = tmp_path / "out.jsonl"
    assert main([
        "predict", "--checkpoint", str(trained_run / "checkpoint.pt"),
        "--input", str(empty), "--output", str(out),
    ]) == 0
    assert read_nested_file(out) == []


def test_predict_missing_checkpoint_exits_2(tmp_path, capsys):
    assert main([
        "predict", "--checkpoint", str(tmp_path / "none.pt"),
        "--input", str(toy_corpus_root() / "alpha" / "train.jsonl"),
        "--output", str(tmp_path / "o.jsonl"),
    ]) == 2
    capsys.readouterr()


def _figure_files(tmp_path):
    tokens = [f"w{i}" for i in range(12)]
    gold = [
        AnnotatedSentence(
            Sentence(tuple(tokens)),
            (Mention(2, 3, "Chemical"), Mention(6, 6, "Disease"), Mention(9, 10, "Disease")),
        )
    ]
    pred = [
        AnnotatedSentence(
            Sentence(tuple(tokens)),
            (
                Mention(2, 3, "BC5_Chemical"),
                Mention(4, 4, "BC5_Disease"),
                Mention(6, 6, "NCBI_Disease"),
                Mention(0, 1, "BC4_Chemical"),
            ),
        )
    ]
    gold_path = tmp_path / "gold.jsonl"
    pred_path = tmp_path / "pred.jsonl"
    write_nested_file(gold_path, gold)
    write_nested_file(pred_path, pred)
    registry = LabelRegistry([
        ("BC4", ["Chemical"]), ("BC5", ["Chemical", "Disease"]), ("NCBI", ["Disease"]),
    ])
    registry_path = tmp_path / "registry.json"
    registry_path.write_text(json.dumps(registry.to_dict()))
    return pred_path, gold_path, registry_path, registry


def test_evaluate_figure_fixture_disjoint(tmp_path, capsys):
    pred_path, gold_path, registry_path, _ = _figure_files(tmp_path)
    out_json = tmp_path / "report.json"
    code = main([
        "evaluate", "--pred", str(pred_path), "--gold", str(gold_path),
        "--scenario", "disjoint", "--source-dataset", "BC5",
        "--registry", str(registry_path), "--output-json", str(out_json),
    ])
    assert code == 0
    capsys.readouterr()
    report = json.loads(out_json.read_text())
    assert (report["overall"]["tp"], report["overall"]["fp"], report["overall"]["fn"]) == (1, 1, 2)


def test_evaluate_matches_library_byte_for_byte(tmp_path, capsys):
    pred_path, gold_path, registry_path, registry = _figure_files(tmp_path)
    out_json = tmp_path / "report.json"
    main([
        "evaluate", "--pred", str(pred_path), "--gold", str(gold_path),
        "--scenario", "merged", "--source-dataset", "BC5",
        "--registry", str(registry_path), "--output-json", str(out_json),
    ])
    capsys.readouterr()
    pred_records = read_nested_file(pred_path)
    gold_records = read_nested_file(gold_path)
    pairs = [(pm, gm) for (_, pm), (_, gm) in zip(pred_records, gold_records)]
    expected = evaluate_corpus(pairs, "BC5", registry, "merged").to_json() + "\n"
    assert out_json.read_text() == expected


def test_evaluate_min_f1_gate(tmp_path, capsys):
    pred_path, gold_path, registry_path, _ = _figure_files(tmp_path)
    args = [
        "evaluate", "--pred", str(pred_path), "--gold", str(gold_path),
        "--scenario", "merged", "--source-dataset", "BC5",
        "--registry", str(registry_path),
    ]
    assert main(args + ["--min-f1", "0.5"]) == 0
    assert main(args + ["--min-f1", "0.9"]) == 1
    capsys.readouterr()


def test_evaluate_identical_files_perfect(tmp_path, capsys):
    _, gold_path, registry_path, _ = _figure_files(tmp_path)
    gold_pred = tmp_path / "gold_as_pred.jsonl"
    records = read_nested_file(gold_path)
    items = [
        AnnotatedSentence(
            Sentence(tuple(tokens)),
            tuple(Mention(m.start, m.end, f"BC5_{m.entity_type}") for m in mentions),
        )
        for tokens, mentions in records
    ]
    write_nested_file(gold_pred, items)
    out_json = tmp_path / "r.json"
    assert main([
        "evaluate", "--pred", str(gold_pred), "--gold", str(gold_path),
        "--scenario", "disjoint", "--source-dataset", "BC5",
        "--registry", str(registry_path), "--output-json", str(out_json),
    ]) == 0
    capsys.readouterr()
    assert json.loads(out_json.read_text())["overall"]["micro_f1"] == 1.0


def test_evaluate_token_mismatch_exits_2(tmp_path, capsys):
    pred_path, gold_path, registry_path, _ = _figure_files(tmp_path)
    mangled = tmp_path / "mangled.jsonl"
    record = json.loads(pred_path.read_text().splitlines()[0])
    record["tokens"][0] = "changed"
    mangled.write_text(json.dumps(record) + "\n")
    assert main([
        "evaluate", "--pred", str(mangled), "--gold", str(gold_path),
        "--scenario", "merged", "--source-dataset", "BC5",
        "--registry", str(registry_path),
    ]) == 2
    assert "mismatch" in json.loads(capsys.readouterr().err.strip())["error"]


def test_evaluate_requires_registry_source(tmp_path, capsys):
    pred_path, gold_path, _, _ = _figure_files(tmp_path)
    assert main([
        "evaluate", "--pred", str(pred_path), "--gold", str(gold_path),
        "--scenario", "merged", "--source-dataset", "BC5",
    ]) == 2
    capsys.readouterr()


def test_encode_actions_golden(tmp_path, capsys, nested_tokens, nested_sequence_str):
    record = {
        "tokens": nested_tokens,
        "mentions": [
            {"start": 2, "end": 6, "type": "DNA"},
            {"start": 2, "end": 5, "type": "Protein"},
            {"start": 4, "end": 5, "type": "DNA"},
        ],
    }
    path = tmp_path / "one.jsonl"
    path.write_text(json.dumps(record) + "\n")
    assert main(["encode-actions", "--input", str(path), "--types", "DNA,Protein"]) == 0
    out = capsys.readouterr().out.strip()
    assert out == nested_sequence_str


def test_encode_actions_unencodable_exits_2(tmp_path, capsys):
    record = {
        "tokens": ["a", "b", "c", "d"],
        "mentions": [
            {"start": 0, "end": 2, "type": "X"},
            {"start": 1, "end": 3, "type": "X"},
        ],
    }
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(record) + "\n")
    assert main(["encode-actions", "--input", str(path)]) == 2
    assert "sentence 0" in json.loads(capsys.readouterr().err.strip())["error"]


def test_split_and_stats(tmp_path, capsys):
    sentences = []
    for i in range(10):
        sentences.append(
            AnnotatedSentence(
                Sentence((f"t{i}", "x", "y")),
                (Mention(0, 0, "Chem"), Mention(2, 2, "Dis")),
            )
        )
    corpus_dir = tmp_path / "corpus"
    corpus_dir.mkdir()
    write_nested_file(corpus_dir / "train.jsonl", sentences)
    write_nested_file(corpus_dir / "dev.jsonl", sentences[:4])

    out_dir = tmp_path / "halves"
    assert main([
        "split", "--input", str(corpus_dir), "--types-a", "Chem", "--types-b", "Dis",
        "--seed", "5", "--output-dir", str(out_dir), "--name", "BC5",
    ]) == 0
    capsys.readouterr()
    a_train = read_nested_file(out_dir / "BC5-Chem" / "train.jsonl")
    b_train = read_nested_file(out_dir / "BC5-Dis" / "train.jsonl")
    assert len(a_train) == 5 and len(b_train) == 5

    assert main(["stats", "--input", str(corpus_dir), "--name", "BC5"]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "split,entity_type,mentions"
    assert "train,Chem,10" in out
    assert "dev,Dis,4" in out


def test_stats_output_file(tmp_path, capsys):
    corpus = tmp_path / "train.jsonl"
    write_nested_file(corpus, [AnnotatedSentence(Sentence(("a",)), (Mention(0, 0, "X"),))])
    out = tmp_path / "stats.csv"
    assert main(["stats", "--input", str(corpus), "--output", str(out)]) == 0
    capsys.readouterr()
    assert out.read_text() == "split,entity_type,mentions\ntrain,X,1\n"
