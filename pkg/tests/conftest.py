"""Shared fixtures: toy backbones, a small synthetic dataset, and latent helpers.

Everything here is session scoped and seeded so the whole suite sees one
deterministic world. Tests that mutate state build their own copies.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch

from fashiontex import TrainConfig, ingest_dataset, load_backbones, synthesize_dataset
from fashiontex.backbones import BackbonesConfig
from fashiontex.latent import LatentCode
from fashiontex.training import new_mapper


def make_latent(backbones, seed: int = 0, scale: float = 0.3) -> LatentCode:
    """A random latent shaped for the loaded generator."""
    g = backbones.generator
    gen = torch.Generator().manual_seed(seed)
    layers = torch.randn(g.num_layers, g.dim, generator=gen) * scale
    return LatentCode(layers, g.bounds)


def make_image(seed: int = 0, size: int = 64) -> torch.Tensor:
    """A random RGB image tensor in [0, 1]."""
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.random((size, size, 3), dtype=np.float64).astype(np.float32))


@pytest.fixture(scope="session")
def backbones():
    return load_backbones(BackbonesConfig())


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory, backbones):
    root = tmp_path_factory.mktemp("dataset")
    return synthesize_dataset(root, 24, backbones, seed=0)


@pytest.fixture(scope="session")
def index(dataset_dir, backbones):
    return ingest_dataset(dataset_dir, backbones)


@pytest.fixture(scope="session")
def mapper(backbones):
    return new_mapper(TrainConfig(seed=0), backbones)
