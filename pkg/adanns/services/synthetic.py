"""
Synthetic matryoshka-style embeddings for adanns
Stands in for trained nested encoders: information is front-loaded by
giving coordinate j a signal scale proportional to (j+1)^-alpha.
"""

import numpy as np
from loguru import logger

from ..core.embeddings import Dataset, EmbeddingSet
from ..models.configs import SyntheticMrSpec


def _decay(d: int, exponent: float) -> np.ndarray:
    return (np.arange(d, dtype=np.float64) + 1.0) ** (-exponent)


def signal_profile(spec: SyntheticMrSpec) -> np.ndarray:
    """Per-coordinate standard deviation of the class means"""
    decay = _decay(spec.d, spec.variance_decay)
    # E||mu_a - mu_b||^2 = 2 * sum(std^2) = class_sep^2
    return decay / np.sqrt(np.sum(decay ** 2)) * spec.class_sep / np.sqrt(2.0)


def noise_profile(spec: SyntheticMrSpec) -> np.ndarray:
    """Per-coordinate standard deviation of the within-class noise"""
    return spec.noise_std * _decay(spec.d, spec.variance_decay * spec.noise_decay_ratio)


def cumulative_signal_share(spec: SyntheticMrSpec) -> np.ndarray:
    """Fraction of per-class signal variance held by the first m coordinates, m = 1..d"""
    variance = _decay(spec.d, spec.variance_decay) ** 2
    return np.cumsum(variance) / np.sum(variance)


def generate_synthetic_mr(spec: SyntheticMrSpec) -> Dataset:
    """Labeled database and query sets drawn from the same class-conditional Gaussians"""
    rng = np.random.default_rng(spec.seed)
    signal = signal_profile(spec)
    noise = noise_profile(spec)

    means = rng.standard_normal((spec.num_classes, spec.d)) * signal
    db_labels = rng.permutation(np.arange(spec.n) % spec.num_classes)
    query_labels = rng.integers(0, spec.num_classes, size=spec.query_count)

    database = means[db_labels] + rng.standard_normal((spec.n, spec.d)) * noise
    queries = means[query_labels] + rng.standard_normal((spec.query_count, spec.d)) * noise

    logger.info(
        f"Generated synthetic MR data: n={spec.n}, queries={spec.query_count}, d={spec.d}, "
        f"classes={spec.num_classes}, alpha={spec.variance_decay}, sep={spec.class_sep}"
    )
    return Dataset(
        database=EmbeddingSet(database.astype(np.float32), labels=db_labels, name="synthetic-base"),
        queries=EmbeddingSet(queries.astype(np.float32), labels=query_labels, name="synthetic-query"),
    )


def generate_rigid_proxy(spec: SyntheticMrSpec) -> Dataset:
    """Same spec without front-loading (alpha = 0): the rigid-representation proxy"""
    return generate_synthetic_mr(spec.model_copy(update={"variance_decay": 0.0}))
