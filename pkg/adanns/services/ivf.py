"""
Inverted-file index for adanns
Clusters are built on the d_c-prefix and member points are scanned on the
d_s-prefix (decoupled construction and search). A full-dimension index can
also be searched with a smaller prefix d_hat at inference time.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from ..core.binary import ByteReader, ByteWriter
from ..core.distances import rank, squared_l2_to
from ..core.embeddings import EmbeddingSet, as_matrix, check_prefix
from ..core.exceptions import ConfigurationError, DimensionError, FormatError
from ..models.configs import KmeansConfig, SearchParams
from ..models.results import SearchResult
from . import kmeans
from .kmeans import Centroids

IVF_MAGIC = b"ADIV"
IVF_VERSION = 2


def _lists_from_assignment(labels: np.ndarray, k: int) -> Tuple[np.ndarray, ...]:
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=k)
    return tuple(chunk.astype(np.int32) for chunk in np.split(order, np.cumsum(counts)[:-1]))


def _expect_source(reader: ByteReader, source: EmbeddingSet) -> None:
    start = reader.offset
    n, d = reader.u32("source n"), reader.u32("source d")
    fingerprint = reader.u64("source fingerprint")
    if (n, d) != (source.n, source.d):
        raise FormatError(
            f"index was built on a {n} x {d} source, got {source.n} x {source.d}", offset=start, path=reader.path
        )
    if fingerprint != source.fingerprint:
        raise FormatError("index was built on different source vectors", offset=start, path=reader.path)


@dataclass(frozen=True, eq=False)
class IvfIndex:
    """k centroids over d_c dims plus one inverted list of point ids per centroid"""

    centroids: Centroids
    lists: Tuple[np.ndarray, ...]
    source: EmbeddingSet

    def __post_init__(self):
        if len(self.lists) != self.centroids.k:
            raise ConfigurationError(f"{len(self.lists)} lists for {self.centroids.k} centroids")
        if self.centroids.dim > self.source.d:
            raise DimensionError(f"d_c={self.centroids.dim} exceeds source dimension {self.source.d}")
        for ids in self.lists:
            ids.flags.writeable = False

    @property
    def k(self) -> int:
        return self.centroids.k

    @property
    def d_c(self) -> int:
        return self.centroids.dim

    @property
    def n(self) -> int:
        return int(sum(ids.shape[0] for ids in self.lists))

    # ------------------------------------------------------------------ build

    @classmethod
    def build(
        cls,
        embeddings: EmbeddingSet,
        d_c: int,
        k: int,
        kcfg: Optional[KmeansConfig] = None,
    ) -> "IvfIndex":
        """Train centroids on the d_c-prefix and file every point under its nearest centroid"""
        d_c = check_prefix(d_c, embeddings.d, "cluster dimension d_c")
        kcfg = KmeansConfig(k=k) if kcfg is None else kcfg.model_copy(update={"k": k})
        view = embeddings.prefix(d_c)

        logger.info(f"Building IVF index: n={embeddings.n}, d_c={d_c}, k={k}, seed={kcfg.seed}")
        centroids = kmeans.train(view, kcfg)
        labels = kmeans.assign(view, centroids, workers=kcfg.workers)
        index = cls(centroids=centroids, lists=_lists_from_assignment(labels, k), source=embeddings)
        logger.info(f"IVF index built: objective={centroids.objective:.6g}, largest list={int(index.cluster_sizes().max())}")
        return index

    # ----------------------------------------------------------------- search

    def _check_query(self, query: np.ndarray, needed: int) -> np.ndarray:
        query = np.asarray(query).reshape(-1)
        if query.shape[0] < needed:
            raise DimensionError(f"query has {query.shape[0]} dims, at least {needed} needed")
        if self.n == 0:
            raise ConfigurationError("cannot search an empty index")
        return query

    def _probe(self, query: np.ndarray, probe_dim: int, n_p: int) -> np.ndarray:
        dists = squared_l2_to(query[:probe_dim], self.centroids.prefix(probe_dim))
        return np.argsort(dists, kind="stable")[:n_p]

    def _scan(
        self,
        query: np.ndarray,
        probes: np.ndarray,
        scan_dim: int,
        topk: int,
        scan_source: EmbeddingSet,
    ) -> SearchResult:
        candidates = np.concatenate([self.lists[j] for j in probes]).astype(np.int64)
        if candidates.size == 0:
            return SearchResult(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), underfilled=True)
        dists = squared_l2_to(query[:scan_dim], scan_source.data[candidates, :scan_dim])
        ids, top = rank(candidates, dists, topk)
        return SearchResult(ids, top, underfilled=ids.shape[0] < topk)

    def probe(self, query, n_p: int, probe_dim: Optional[int] = None) -> np.ndarray:
        """Ids of the n_p centroids nearest to the query's probe_dim-prefix"""
        probe_dim = self.d_c if probe_dim is None else check_prefix(probe_dim, self.d_c, "probe dimension")
        if not 1 <= n_p <= self.k:
            raise ConfigurationError(f"n_p={n_p} outside [1, k={self.k}]")
        return self._probe(self._check_query(query, probe_dim), probe_dim, n_p)

    def search(
        self,
        query,
        params: SearchParams,
        scan_source: Optional[EmbeddingSet] = None,
    ) -> SearchResult:
        """
        Probe the n_p centroids nearest to the query's d_c-prefix (or d_shortlist-prefix),
        then rank every member of the probed lists by d_s-prefix distance.

        `scan_source` scans a different embedding of the same ids (rigid proxies).
        """
        scan_source = self.source if scan_source is None else scan_source
        if scan_source.n != self.source.n:
            raise ConfigurationError(f"scan source has {scan_source.n} rows, index covers {self.source.n}")
        d_s = check_prefix(params.d_s, scan_source.d, "scan dimension d_s")
        if params.n_p > self.k:
            raise ConfigurationError(f"n_p={params.n_p} exceeds k={self.k}")
        probe_dim = self.d_c
        if params.d_shortlist is not None:
            probe_dim = check_prefix(params.d_shortlist, self.d_c, "shortlist dimension")

        query = self._check_query(query, max(probe_dim, d_s))
        probes = self._probe(query, probe_dim, params.n_p)
        return self._scan(query, probes, d_s, params.topk, scan_source)

    def search_adaptive_d(self, query, d_hat: int, params: SearchParams) -> SearchResult:
        """
        Inference-time prefix search on a full-dimension index: probing and
        scanning both use the d_hat-prefix; the index itself is untouched.
        params.d_s and params.d_shortlist are ignored.
        """
        if self.d_c != self.source.d:
            raise ConfigurationError(
                f"adaptive-d search needs an index built at full dimension {self.source.d}, got d_c={self.d_c}"
            )
        d_hat = check_prefix(d_hat, self.source.d, "d_hat")
        if params.n_p > self.k:
            raise ConfigurationError(f"n_p={params.n_p} exceeds k={self.k}")
        query = self._check_query(query, d_hat)
        probes = self._probe(query, d_hat, params.n_p)
        return self._scan(query, probes, d_hat, params.topk, self.source)

    def search_batch(
        self,
        queries,
        params: SearchParams,
        scan_source: Optional[EmbeddingSet] = None,
    ) -> List[SearchResult]:
        return [self.search(q, params, scan_source=scan_source) for q in as_matrix(queries, "queries")]

    def search_adaptive_d_batch(self, queries, d_hat: int, params: SearchParams) -> List[SearchResult]:
        return [self.search_adaptive_d(q, d_hat, params) for q in as_matrix(queries, "queries")]

    # ------------------------------------------------------------ inspection

    def cluster_sizes(self) -> np.ndarray:
        return np.array([ids.shape[0] for ids in self.lists], dtype=np.int64)

    def assignments(self) -> np.ndarray:
        """List index of every database point"""
        labels = np.full(self.source.n, -1, dtype=np.int64)
        for j, ids in enumerate(self.lists):
            labels[ids] = j
        return labels

    # --------------------------------------------------------- serialization

    def to_bytes(self) -> bytes:
        writer = (
            ByteWriter()
            .magic(IVF_MAGIC)
            .u32(IVF_VERSION)
            .u32(self.source.n)
            .u32(self.source.d)
            .u64(self.source.fingerprint)
            .u32(self.k)
            .u32(self.d_c)
            .f64(self.centroids.objective)
            .array(self.centroids.data, "<f4")
        )
        for ids in self.lists:
            writer.u32(ids.shape[0]).array(ids, "<i4")
        return writer.getvalue()

    @classmethod
    def from_reader(cls, reader: ByteReader, source: EmbeddingSet) -> "IvfIndex":
        reader.expect_magic(IVF_MAGIC)
        reader.expect_version(IVF_VERSION)
        _expect_source(reader, source)
        k = reader.u32("k")
        d_c = reader.u32("d_c")
        if k == 0 or d_c == 0:
            raise FormatError(f"invalid header k={k}, d_c={d_c}", offset=reader.offset, path=reader.path)
        if d_c > source.d:
            raise FormatError(f"index d_c={d_c} exceeds source dimension {source.d}", path=reader.path)
        objective = reader.f64("objective")
        centers = reader.array(k * d_c, "<f4", "centroid block").reshape(k, d_c)
        lists = []
        for j in range(k):
            length = reader.u32(f"list {j} length")
            lists.append(reader.array(length, "<i4", f"list {j}").astype(np.int32))

        filed = np.concatenate(lists) if lists else np.empty(0, dtype=np.int32)
        if filed.shape[0] != source.n or np.unique(filed).shape[0] != source.n or (
            filed.size and (filed.min() < 0 or filed.max() >= source.n)
        ):
            raise FormatError(
                f"inverted lists do not partition the {source.n} source ids", path=reader.path
            )
        return cls(centroids=Centroids(centers, objective), lists=tuple(lists), source=source)

    @classmethod
    def from_bytes(cls, buffer: bytes, source: EmbeddingSet, path: Optional[str] = None) -> "IvfIndex":
        reader = ByteReader(buffer, path=path)
        index = cls.from_reader(reader, source)
        reader.expect_end()
        return index

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())
        logger.info(f"Saved IVF index (k={self.k}, d_c={self.d_c}) to {path}")

    @classmethod
    def load(cls, path: Union[str, Path], source: EmbeddingSet) -> "IvfIndex":
        return cls.from_bytes(Path(path).read_bytes(), source, path=str(path))


# Functional entry points

def build(embeddings: EmbeddingSet, d_c: int, k: int, kcfg: Optional[KmeansConfig] = None) -> IvfIndex:
    return IvfIndex.build(embeddings, d_c, k, kcfg)


def search(index: IvfIndex, query, params: SearchParams) -> SearchResult:
    return index.search(query, params)


def search_adaptive_d(index: IvfIndex, query, d_hat: int, params: SearchParams) -> SearchResult:
    return index.search_adaptive_d(query, d_hat, params)


def cluster_sizes(index: IvfIndex) -> np.ndarray:
    return index.cluster_sizes()


def result_ids(results: Sequence[SearchResult], topk: int, fill: int = -1) -> np.ndarray:
    """Stack ranked ids into an (nq, topk) matrix, padding underfilled rows with `fill`"""
    table = np.full((len(results), topk), fill, dtype=np.int64)
    for row, result in enumerate(results):
        table[row, :len(result)] = result.ids[:topk]
    return table


def result_distances(results: Sequence[SearchResult], topk: int) -> np.ndarray:
    table = np.full((len(results), topk), np.inf, dtype=np.float32)
    for row, result in enumerate(results):
        table[row, :len(result)] = result.distances[:topk]
    return table
