"""
Test configuration and fixtures for adanns
"""

import os
from pathlib import Path

import numpy as np
import pytest
from loguru import logger

from adanns.core.embeddings import Dataset, EmbeddingSet
from adanns.models.configs import KmeansConfig, SyntheticMrSpec
from adanns.services.ivf import IvfIndex
from adanns.services.quantization import train_opq, train_pq
from adanns.services.synthetic import generate_synthetic_mr


# Test environment setup
@pytest.fixture(scope="session", autouse=True)
def setup_test_environment():
    """Keep ADANNS_* variables from the caller's shell out of the tests"""
    saved = {key: os.environ.pop(key) for key in list(os.environ) if key.startswith("ADANNS_")}
    logger.remove()
    yield
    os.environ.update(saved)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for ad-hoc test data"""
    return np.random.default_rng(1234)


# Dataset fixtures
@pytest.fixture(scope="session")
def small_spec() -> SyntheticMrSpec:
    """2000 x 64 front-loaded data with 100 queries"""
    return SyntheticMrSpec(n=2000, d=64, num_classes=10, n_queries=100, variance_decay=1.0, seed=0)


@pytest.fixture(scope="session")
def small_dataset(small_spec) -> Dataset:
    return generate_synthetic_mr(small_spec)


@pytest.fixture(scope="session")
def tiny_dataset() -> Dataset:
    """600 x 32 data with 40 queries for fast end-to-end checks"""
    spec = SyntheticMrSpec(n=600, d=32, num_classes=5, n_queries=40, variance_decay=1.0, seed=3)
    return generate_synthetic_mr(spec)


@pytest.fixture(scope="session")
def small_ivf(small_dataset) -> IvfIndex:
    """IVF on the 32-prefix of the small dataset with 16 clusters"""
    return IvfIndex.build(small_dataset.database, d_c=32, k=16, kcfg=KmeansConfig(k=16, seed=0))


@pytest.fixture(scope="session")
def full_ivf(small_dataset) -> IvfIndex:
    """IVF built at the full dimension (for inference-time prefix search)"""
    return IvfIndex.build(small_dataset.database, d_c=64, k=16, kcfg=KmeansConfig(k=16, seed=0))


@pytest.fixture(scope="session")
def anisotropic_points() -> np.ndarray:
    """1000 x 32 Gaussian points with decaying per-coordinate scale"""
    gen = np.random.default_rng(7)
    scales = np.linspace(3.0, 0.2, 32)
    return (gen.standard_normal((1000, 32)) * scales).astype(np.float32)


@pytest.fixture(scope="session")
def pq_codec(anisotropic_points):
    return train_pq(anisotropic_points, m=8, kcfg=KmeansConfig(k=256, max_iters=10, seed=0))


@pytest.fixture(scope="session")
def opq_codec(anisotropic_points):
    return train_opq(anisotropic_points, m=8, iters=4, kcfg=KmeansConfig(k=256, max_iters=10, seed=0))


# Utility fixtures
@pytest.fixture
def artifact_dir(tmp_path) -> Path:
    """Scratch directory for files written by a test"""
    path = tmp_path / "artifacts"
    path.mkdir()
    return path


def make_set(rows, labels=None) -> EmbeddingSet:
    """EmbeddingSet from a nested list or array"""
    return EmbeddingSet(np.asarray(rows, dtype=np.float32), labels=labels)
