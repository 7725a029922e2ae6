from __future__ import annotations

import json

import pytest

from sru_ner.config import (
    ConfigError,
    EncoderConfig,
    ExperimentConfig,
    GeneratorConfig,
    SruConfig,
    TrainConfig,
    load_config,
)


def test_training_defaults_match_reference_table():
    tc = TrainConfig()
    assert tc.epochs == 100
    assert tc.patience == 30
    assert tc.batch_size == 16
    assert tc.max_tokens == 405
    assert tc.grad_clip == 1.0
    assert tc.encoder_lr == 2e-5
    assert tc.encoder_weight_decay == 1e-3
    assert tc.encoder_warmup_epochs == 1.0
    assert tc.head_lr == 3e-4
    assert tc.head_weight_decay == 1e-3
    assert tc.head_warmup_epochs == 0.5
    assert (tc.adam_beta1, tc.adam_beta2, tc.adam_eps) == (0.9, 0.98, 1e-6)


def test_sru_and_generator_defaults():
    sc = SruConfig()
    assert sc.latent_multiplier == 2
    assert sc.half_context == 150
    assert sc.latent_dropout == 0.2
    assert sc.position_dropout == 0.2
    assert sc.train_alpha is False
    assert GeneratorConfig().logit_dropout == 0.1


def test_genia_variants():
    sc = SruConfig.genia()
    assert sc.latent_multiplier == 10
    assert sc.half_context == 240
    assert sc.train_alpha is True
    assert TrainConfig.genia().encoder_lr == 3e-5


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"training": {"learning_rate": 1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"mystery": {}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"datasets": [{"name": "x", "format": "nested",
                                                  "train": "t", "bogus": 1}]})


def test_round_trip_dict():
    cfg = ExperimentConfig(encoder=EncoderConfig(d_enc=48))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.encoder.d_enc == 48
    assert again.training == cfg.training


def test_load_config_resolves_relative_paths(tmp_path):
    sub = tmp_path / "configs"
    sub.mkdir()
    (tmp_path / "data").mkdir()
    corpus = tmp_path / "data" / "train.jsonl"
    corpus.write_text('{"tokens": ["a"], "mentions": []}\n')
    cfg_path = sub / "c.json"
    cfg_path.write_text(json.dumps({
        "datasets": [{"name": "d", "format": "nested", "train": "../data/train.jsonl"}],
    }))
    cfg = load_config(cfg_path)
    assert cfg.datasets[0].train == str(corpus.resolve())


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
