"""Experiment configuration tree, YAML loading, and per-purpose seed derivation.

Seed derivation: every random stream is seeded with
``derive_seed(root, purpose) = first 8 bytes (little endian) of
sha256(f"{root}/{purpose}")``, with purposes ``split``, ``augment``,
``init``, ``shuffle`` and ``dropout``. Streams that vary per epoch add the
epoch as a second entropy word, so rerunning any single stage, or resuming
mid-run, draws the same numbers.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from .batchformer import BatchFormerConfig
from .swin import SwinConfig

PURPOSES = ("split", "augment", "init", "shuffle", "dropout")


def derive_seed(root: int, purpose: str) -> int:
    if purpose not in PURPOSES:
        raise ValueError(f"unknown seed purpose {purpose!r}")
    digest = hashlib.sha256(f"{int(root)}/{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class ConfigError(ValueError):
    pass


@dataclass
class LossConfig:
    kind: str = "focal"
    gamma: float = 2.0
    alpha: Union[str, list] = "inverse_frequency"

    def __post_init__(self):
        if self.kind not in ("ce", "focal"):
            raise ConfigError(f"loss.kind must be 'ce' or 'focal', got {self.kind!r}")
        if self.gamma < 0:
            raise ConfigError("loss.gamma must be >= 0")
        if isinstance(self.alpha, str) and self.alpha not in ("uniform", "inverse_frequency"):
            raise ConfigError(f"loss.alpha must be uniform, inverse_frequency or a list, got {self.alpha!r}")


@dataclass
class SchedConfig:
    kind: str = "plateau"
    factor: float = 0.1
    patience: int = 5
    threshold: float = 1e-4
    min_lr: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("plateau", "none"):
            raise ConfigError(f"sched.kind must be 'plateau' or 'none', got {self.kind!r}")


@dataclass
class OptimConfig:
    lr: float = 1e-3
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("optim.lr must be positive")


@dataclass
class TrainLoopConfig:
    epochs: int = 30
    batch_size: int = 32
    eval_batch_size: int = 32
    loader_threads: int = 0  # 0 = synchronous loading, the only bit-deterministic mode

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("train.epochs, train.batch_size and train.eval_batch_size must be positive")


@dataclass
class SplitConfig:
    fractions: tuple = (0.70, 0.15, 0.15)

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)


@dataclass
class AugmentConfig:
    elastic: bool = False
    threshold: int = 2000
    multiplier: int = 2
    sigma: float = 8.0
    alpha: float = 12.0
    policy: list = field(default_factory=list)

    def __post_init__(self):
        if self.multiplier < 1:
            raise ConfigError("augment.multiplier must be >= 1")


@dataclass
class PathsConfig:
    dataset: Optional[str] = None
    gt_csv: Optional[str] = None
    manifest: Optional[str] = None
    augment_manifest: Optional[str] = None
    out: str = "runs/default"


@dataclass
class ExperimentConfig:
    seed: int = 0
    model: SwinConfig = field(default_factory=SwinConfig)
    batchformer: BatchFormerConfig = field(default_factory=BatchFormerConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    sched: SchedConfig = field(default_factory=SchedConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainLoopConfig = field(default_factory=TrainLoopConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if self.batchformer.feature_dim != self.model.num_features:
            raise ConfigError(
                f"batchformer.feature_dim {self.batchformer.feature_dim} != model width {self.model.num_features}"
            )
        if self.batchformer.enabled and self.train.batch_size < 2:
            raise ConfigError("train.batch_size must be >= 2 when the BatchFormer is enabled")

    def seed_for(self, purpose: str) -> int:
        return derive_seed(self.seed, purpose)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with dotted overrides, e.g. ``replace(**{"loss.kind": "ce"})``."""
        d = self.to_dict()
        for key, value in sections.items():
            node = d
            *parents, leaf = key.split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[leaf] = value
        return from_dict(d)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s) in {where or 'root'}: {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        sub = _SECTIONS.get(name) if cls is ExperimentConfig else None
        kwargs[name] = _build(sub, value, name) if sub is not None else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


_SECTIONS = {
    "model": SwinConfig,
    "batchformer": BatchFormerConfig,
    "loss": LossConfig,
    "sched": SchedConfig,
    "optim": OptimConfig,
    "train": TrainLoopConfig,
    "split": SplitConfig,
    "augment": AugmentConfig,
    "paths": PathsConfig,
}


def from_dict(data: Optional[dict]) -> ExperimentConfig:
    data = dict(data or {})
    model = _build(SwinConfig, data.get("model", {}), "model")
    bf = dict(data.get("batchformer", {}))
    bf.setdefault("feature_dim", model.num_features)
    data["batchformer"] = bf
    return _build(ExperimentConfig, data, "")


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
