"""One configuration file for the whole pipeline.

A config is a YAML document with one section per module. Absent sections and
keys take the owning module's defaults; unknown keys are rejected with their
full path. The dumped effective config parses back to an identical config.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backbones import BackbonesConfig
from .confutil import ConfigError, from_plain, to_plain
from .evaluation import EvalConfig
from .latent import GroupBounds
from .losses import LossWeights
from .recovery import RecoveryConfig
from .training import TrainConfig


@dataclass(frozen=True)
class TrainingSection:
    """Loop settings; weights and backbones live in their own sections."""

    data_dir: str | None = None
    steps: int = 200
    batch_size: int = 4
    learning_rate: float = 5e-4
    crop_size: int = 16
    seed: int = 0
    checkpoint_every: int = 100
    log_every: int = 10
    mapper_depth: int = 4
    out_dir: str = "runs/toy"


@dataclass(frozen=True)
class ServiceSection:
    host: str = "127.0.0.1"
    port: int = 8080
    max_upload_bytes: int = 4 * 1024 * 1024
    recovery_parallelism: int = 2
    persist_dir: str | None = None
    # Mapper checkpoint served for edits; a freshly initialized mapper when
    # absent.
    mapper_path: str | None = None

    def __post_init__(self):
        if self.max_upload_bytes < 1:
            raise ValueError("max_upload_bytes must be positive")
        if self.recovery_parallelism < 1:
            raise ValueError("recovery_parallelism must be at least 1")


@dataclass(frozen=True)
class Config:
    backbones: BackbonesConfig = field(default_factory=BackbonesConfig)
    grouping: GroupBounds | None = None
    loss_weights: LossWeights = field(default_factory=LossWeights)
    training: TrainingSection = field(default_factory=TrainingSection)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    service: ServiceSection = field(default_factory=ServiceSection)
    evaluation: EvalConfig = field(default_factory=EvalConfig)


ENV_CONFIG = "FASHIONTEX_CONFIG"


def load_config(path=None) -> Config:
    """Read a YAML config; fall back to $FASHIONTEX_CONFIG, then to defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is None:
        return Config()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        return Config()
    return from_plain(Config, data, path="config")


def dump_config(cfg: Config) -> str:
    """Effective config as YAML; load_config on the output reproduces cfg."""
    return yaml.safe_dump(to_plain(cfg), sort_keys=True)


def train_config(cfg: Config) -> TrainConfig:
    """Merge the training section with the shared sections it depends on."""
    t = cfg.training
    return TrainConfig(
        steps=t.steps,
        batch_size=t.batch_size,
        learning_rate=t.learning_rate,
        weights=cfg.loss_weights,
        crop_size=t.crop_size,
        seed=t.seed,
        checkpoint_every=t.checkpoint_every,
        log_every=t.log_every,
        mapper_depth=t.mapper_depth,
        out_dir=t.out_dir,
        backbones=cfg.backbones,
        bounds=cfg.grouping,
    )


def backbone_config_hash(cfg: BackbonesConfig) -> str:
    """Stable digest of the backbone configuration, reported by /healthz."""
    canonical = json.dumps(to_plain(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
