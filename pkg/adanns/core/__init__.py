"""
Core functionality for adanns: embedding store, file formats, kernels, errors
"""

from .embeddings import Dataset, EmbeddingSet, EmbeddingView, normalized, prefix_view, rigid_proxy, truncate
from .exceptions import (
    AdannsError,
    ConfigurationError,
    DimensionError,
    FormatError,
    InsufficientDataError,
    MetricError,
)
from .vecs_io import read_fvecs, read_ivecs, read_labels, write_fvecs, write_ivecs, write_labels

__all__ = [
    "Dataset",
    "EmbeddingSet",
    "EmbeddingView",
    "normalized",
    "prefix_view",
    "rigid_proxy",
    "truncate",
    "AdannsError",
    "ConfigurationError",
    "DimensionError",
    "FormatError",
    "InsufficientDataError",
    "MetricError",
    "read_fvecs",
    "read_ivecs",
    "read_labels",
    "write_fvecs",
    "write_ivecs",
    "write_labels",
]
