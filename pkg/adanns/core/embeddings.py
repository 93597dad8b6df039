"""
Embedding store for adanns
Owns dense float32 matrices and hands out matryoshka prefix views
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
import numpy.typing as npt
import xxhash

from .exceptions import ConfigurationError, DimensionError

# A prefix view is a plain numpy view: n rows, m columns, no copy.
EmbeddingView = npt.NDArray[np.float32]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Immutable n x d float32 matrix with optional ids and labels"""

    data: np.ndarray
    ids: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    name: str = field(default="embeddings")

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ConfigurationError(f"embedding data must be 2-D, got shape {data.shape}")
        n = data.shape[0]

        ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (n,):
            raise ConfigurationError(f"ids must have length {n}, got {ids.shape}")

        labels = None
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape != (n,):
                raise ConfigurationError(f"labels must have length {n}, got {labels.shape[0]}")
            labels = _readonly(labels.copy())

        # frozen dataclass: bypass __setattr__ for normalized fields
        object.__setattr__(self, "data", _readonly(data if data is not self.data else data.copy()))
        object.__setattr__(self, "ids", _readonly(ids.copy()))
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    @cached_property
    def fingerprint(self) -> int:
        """64-bit digest of the shape and the float32 payload"""
        digest = xxhash.xxh3_64()
        digest.update(np.asarray(self.data.shape, dtype="<u8").tobytes())
        digest.update(self.data.tobytes())
        return digest.intdigest()

    def prefix(self, m: int) -> EmbeddingView:
        return prefix_view(self, m)

    def with_labels(self, labels: Optional[np.ndarray]) -> "EmbeddingSet":
        return EmbeddingSet(self.data, ids=self.ids, labels=labels, name=self.name)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"EmbeddingSet(name={self.name!r}, n={self.n}, d={self.d}, labels={self.has_labels})"


class Dataset(NamedTuple):
    """Database and query sets that belong together"""

    database: EmbeddingSet
    queries: EmbeddingSet


def check_prefix(m: int, d: int, what: str = "prefix width") -> int:
    """Validate 1 <= m <= d and return m as int"""
    if isinstance(m, bool) or int(m) != m:
        raise DimensionError(f"{what} must be an integer, got {m!r}")
    m = int(m)
    if not 1 <= m <= d:
        raise DimensionError(f"{what} {m} outside [1, {d}]")
    return m


def prefix_view(embeddings: EmbeddingSet, m: int) -> EmbeddingView:
    """First m coordinates of every row, as a view sharing memory with the set"""
    m = check_prefix(m, embeddings.d)
    return embeddings.data[:, :m]


def truncate(embeddings: EmbeddingSet, m: int) -> EmbeddingSet:
    """Contiguous copy of the m-prefix (a standalone m-dim embedding set)"""
    m = check_prefix(m, embeddings.d)
    return EmbeddingSet(
        np.array(embeddings.data[:, :m], dtype=np.float32, order="C"),
        ids=embeddings.ids,
        labels=embeddings.labels,
        name=f"{embeddings.name}[:{m}]",
    )


def normalize_rows(data: np.ndarray) -> np.ndarray:
    """L2-normalize rows; zero rows stay zero"""
    data = np.asarray(data, dtype=np.float64)
    norms = np.linalg.norm(data, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return (data / norms).astype(np.float32)


def normalized(embeddings: EmbeddingSet) -> EmbeddingSet:
    """Rows scaled to unit L2 norm (cosine metric via pre-normalization)"""
    return EmbeddingSet(
        normalize_rows(embeddings.data),
        ids=embeddings.ids,
        labels=embeddings.labels,
        name=embeddings.name,
    )


def rigid_proxy(embeddings: EmbeddingSet, m: int) -> EmbeddingSet:
    """Truncate to m coordinates, then renormalize rows"""
    return normalized(truncate(embeddings, m))


def as_matrix(points, what: str = "points") -> np.ndarray:
    """Accept an EmbeddingSet or any 2-D array-like and return a 2-D array"""
    if isinstance(points, EmbeddingSet):
        return points.data
    array = np.asarray(points)
    if array.ndim == 1:
        array = array[None, :]
    if array.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {array.shape}")
    return array
