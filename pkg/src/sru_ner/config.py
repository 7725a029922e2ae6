"""Configuration dataclasses and JSON loading.

Training defaults follow the reference hyperparameter table (gradient clip
1.0, logit dropout 0.1, AdamW betas 0.9/0.98 with eps 1e-6, encoder lr 2e-5,
head lr 3e-4, warmups of 1 and 0.5 epochs). ``genia()`` constructors switch
to the wider-context variant (latent multiplier 10, half-context 240,
encoder lr 3e-5, trainable memory scale).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Malformed or incomplete configuration."""


def _from_mapping(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**data)


@dataclass
class EncoderConfig:
    kind: str = "toy"  # toy | pretrained
    name: str | None = None  # model name for kind=pretrained
    d_enc: int = 32
    buckets: int = 2048  # toy hash-table size
    max_subwords: int = 512
    chunk_len: int = 4  # toy subword chunk length


@dataclass
class SruConfig:
    latent_multiplier: int = 2
    half_context: int = 150
    latent_dropout: float = 0.2
    position_dropout: float = 0.2
    train_alpha: bool = False

    @classmethod
    def genia(cls) -> "SruConfig":
        return cls(latent_multiplier=10, half_context=240, train_alpha=True)


@dataclass
class GeneratorConfig:
    hidden: int | None = None  # MLP hidden width; defaults to d_enc
    logit_dropout: float = 0.1


@dataclass
class TrainConfig:
    epochs: int = 100
    patience: int = 30
    batch_size: int = 16
    max_tokens: int = 405
    grad_clip: float = 1.0
    encoder_lr: float = 2e-5
    encoder_weight_decay: float = 1e-3
    encoder_warmup_epochs: float = 1.0
    head_lr: float = 3e-4
    head_weight_decay: float = 1e-3
    head_warmup_epochs: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-6
    seed: int = 0

    @classmethod
    def genia(cls) -> "TrainConfig":
        return cls(encoder_lr=3e-5)


@dataclass
class DatasetConfig:
    name: str
    format: str  # nested | bio
    train: str
    dev: str | None = None
    test: str | None = None
    types: list[str] | None = None

    def split_paths(self) -> dict[str, str]:
        paths = {"train": self.train}
        if self.dev:
            paths["dev"] = self.dev
        if self.test:
            paths["test"] = self.test
        return paths


@dataclass
class ExperimentConfig:
    datasets: list[DatasetConfig] = field(default_factory=list)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    sru: SruConfig = field(default_factory=SruConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    run_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        datasets = [
            _from_mapping(DatasetConfig, entry, f"datasets[{i}]")
            for i, entry in enumerate(data.pop("datasets", []))
        ]
        cfg = cls(
            datasets=datasets,
            encoder=_from_mapping(EncoderConfig, data.pop("encoder", {}), "encoder"),
            sru=_from_mapping(SruConfig, data.pop("sru", {}), "sru"),
            generator=_from_mapping(GeneratorConfig, data.pop("generator", {}), "generator"),
            training=_from_mapping(TrainConfig, data.pop("training", {}), "training"),
            run_dir=data.pop("run_dir", None),
        )
        if data:
            raise ConfigError(f"unknown top-level config keys {sorted(data)}")
        return cfg


def load_config(path) -> ExperimentConfig:
    """Read a JSON config; dataset paths are resolved relative to the file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = ExperimentConfig.from_dict(data)
    base = path.parent
    for ds in cfg.datasets:
        ds.train = str((base / ds.train).resolve()) if ds.train else ds.train
        ds.dev = str((base / ds.dev).resolve()) if ds.dev else ds.dev
        ds.test = str((base / ds.test).resolve()) if ds.test else ds.test
    return cfg
