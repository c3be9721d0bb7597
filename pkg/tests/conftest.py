"""
Pytest configuration and shared fixtures for the test suite.

Datasets are small so unit tests stay fast; acceptance-scale checks are marked
``slow``. MNIST tests read the IDX files from ``$AUGMANIFOLD_MNIST_DIR``.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from augmanifold.config import MNIST_DIR_ENV
from augmanifold.manifolds import MultiViewDataset, clifford_torus, generate_dataset, torus


@pytest.fixture(scope="session")
def repo_root():
    """Repository root directory."""
    return Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def config_dir(repo_root):
    """Shipped experiment configurations."""
    return repo_root / "config"


@pytest.fixture
def rng():
    """Fresh generator for test inputs."""
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_torus() -> MultiViewDataset:
    """Torus with 60 samples and 3 views."""
    return generate_dataset(torus(), 60, 3, seed=3)


@pytest.fixture(scope="session")
def small_clifford() -> MultiViewDataset:
    """Clifford torus with 80 samples and 4 views."""
    return generate_dataset(clifford_torus(1.0, 1.0), 80, 4, seed=5)


@pytest.fixture(scope="session")
def mnist_dir() -> Path:
    """Folder holding the MNIST IDX files; skips the test when unavailable."""
    directory = os.environ.get(MNIST_DIR_ENV)
    if not directory or not (Path(directory) / "train-images-idx3-ubyte.gz").is_file():
        pytest.skip(f"MNIST files not found; set {MNIST_DIR_ENV}")
    return Path(directory)
