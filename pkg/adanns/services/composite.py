"""
Composite IVF + OPQ index for adanns
IVF shortlisting on the d_c-prefix, ADC scoring of the probed members with a
d_q-prefix codec, and optional full-precision re-ranking on a rerank_dim prefix.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from loguru import logger

from ..config import SEARCH_CONFIG, settings
from ..core.binary import ByteReader, ByteWriter
from ..core.distances import rank, squared_l2_to
from ..core.embeddings import EmbeddingSet, as_matrix, check_prefix
from ..core.exceptions import ConfigurationError, DimensionError, FormatError
from ..models.configs import KmeansConfig, SearchParams
from ..models.results import SearchResult
from .ivf import IvfIndex
from .quantization import PqCodec, train_opq, train_pq

COMPOSITE_MAGIC = b"ADCP"
COMPOSITE_VERSION = 1


@dataclass(frozen=True, eq=False)
class CompositeIndex:
    ivf: IvfIndex
    codec: PqCodec
    codes: np.ndarray
    rerank_dim: int = 0

    def __post_init__(self):
        source = self.ivf.source
        codes = np.ascontiguousarray(self.codes, dtype=np.uint8)
        if codes.shape != (source.n, self.codec.m):
            raise DimensionError(f"codes must have shape {(source.n, self.codec.m)}, got {codes.shape}")
        if self.codec.d_q > source.d:
            raise DimensionError(f"d_q={self.codec.d_q} exceeds source dimension {source.d}")
        if not 0 <= self.rerank_dim <= source.d:
            raise DimensionError(f"rerank_dim={self.rerank_dim} outside [0, {source.d}]")
        codes.flags.writeable = False
        object.__setattr__(self, "codes", codes)

    @property
    def source(self) -> EmbeddingSet:
        return self.ivf.source

    @property
    def d_c(self) -> int:
        return self.ivf.d_c

    @property
    def d_q(self) -> int:
        return self.codec.d_q

    @property
    def k(self) -> int:
        return self.ivf.k

    def search(self, query, params: SearchParams, shortlist: Optional[int] = None) -> SearchResult:
        """
        Probe n_p clusters, ADC-score their members and keep `shortlist` of
        them; with rerank_dim > 0 the shortlist is re-sorted by exact
        rerank_dim-prefix distance. Returns the top-k.
        """
        shortlist = SEARCH_CONFIG["shortlist_factor"] * params.topk if shortlist is None else shortlist
        if shortlist < 1:
            raise ConfigurationError(f"shortlist must be >= 1, got {shortlist}")
        if self.rerank_dim > 0 and shortlist < params.topk:
            raise ConfigurationError(f"shortlist={shortlist} is smaller than topk={params.topk}")
        if params.n_p > self.k:
            raise ConfigurationError(f"n_p={params.n_p} exceeds k={self.k}")
        probe_dim = self.d_c
        if params.d_shortlist is not None:
            probe_dim = check_prefix(params.d_shortlist, self.d_c, "shortlist dimension")

        query = self.ivf._check_query(query, max(probe_dim, self.d_q, self.rerank_dim))
        probes = self.ivf._probe(query, probe_dim, params.n_p)
        candidates = np.concatenate([self.ivf.lists[j] for j in probes]).astype(np.int64)
        underfilled = candidates.shape[0] < params.topk
        if candidates.size == 0:
            return SearchResult(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64), underfilled=True)

        approx = self.codec.adc_distance(query, self.codes[candidates])
        if self.rerank_dim == 0:
            ids, dists = rank(candidates, approx, params.topk)
            return SearchResult(ids, dists, underfilled=underfilled)

        short_ids, _ = rank(candidates, approx, shortlist)
        exact = squared_l2_to(query[:self.rerank_dim], self.source.data[short_ids, :self.rerank_dim])
        ids, dists = rank(short_ids, exact, params.topk)
        return SearchResult(ids, dists, underfilled=underfilled)

    def search_batch(self, queries, params: SearchParams, shortlist: Optional[int] = None) -> List[SearchResult]:
        return [self.search(q, params, shortlist=shortlist) for q in as_matrix(queries, "queries")]

    # --------------------------------------------------------- serialization

    def to_bytes(self) -> bytes:
        return (
            ByteWriter()
            .magic(COMPOSITE_MAGIC)
            .u32(COMPOSITE_VERSION)
            .u32(self.rerank_dim)
            .blob(self.ivf.to_bytes())
            .blob(self.codec.to_bytes())
            .u64(self.codes.shape[0])
            .array(self.codes, "<u1")
            .getvalue()
        )

    @classmethod
    def from_bytes(cls, buffer: bytes, source: EmbeddingSet, path: Optional[str] = None) -> "CompositeIndex":
        reader = ByteReader(buffer, path=path)
        reader.expect_magic(COMPOSITE_MAGIC)
        reader.expect_version(COMPOSITE_VERSION)
        rerank_dim = reader.u32("rerank_dim")

        ivf_block = reader.blob("ivf block")
        ivf = IvfIndex.from_reader(ivf_block, source)
        ivf_block.expect_end()
        codec_block = reader.blob("codec block")
        codec = PqCodec.from_reader(codec_block)
        codec_block.expect_end()

        start = reader.offset
        n = reader.u64("code count")
        if n != source.n:
            raise FormatError(f"{n} code rows for a source of {source.n}", offset=start, path=path)
        codes = reader.array(n * codec.m, "<u1", "code block").reshape(n, codec.m)
        reader.expect_end()
        if rerank_dim > source.d or codec.d_q > source.d:
            raise FormatError(
                f"rerank_dim={rerank_dim} or d_q={codec.d_q} exceeds source dimension {source.d}", path=path
            )
        return cls(ivf=ivf, codec=codec, codes=codes, rerank_dim=rerank_dim)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())
        logger.info(f"Saved composite index (k={self.k}, d_c={self.d_c}, d_q={self.d_q}, m={self.codec.m}) to {path}")

    @classmethod
    def load(cls, path: Union[str, Path], source: EmbeddingSet) -> "CompositeIndex":
        return cls.from_bytes(Path(path).read_bytes(), source, path=str(path))


def build_composite(
    embeddings: EmbeddingSet,
    d_c: int,
    k: int,
    d_q: int,
    m: int,
    rerank_dim: int = 0,
    kcfg: Optional[KmeansConfig] = None,
    opq_iters: int = settings.opq_iters,
    rotate: bool = True,
) -> CompositeIndex:
    """IVF on the d_c-prefix, (O)PQ codec with m bytes on the d_q-prefix, every point encoded"""
    d_q = check_prefix(d_q, embeddings.d, "quantized dimension d_q")
    if not 0 <= rerank_dim <= embeddings.d:
        raise DimensionError(f"rerank_dim={rerank_dim} outside [0, {embeddings.d}]")
    ivf = IvfIndex.build(embeddings, d_c, k, kcfg)

    view = embeddings.prefix(d_q)
    codec_cfg = None if kcfg is None else kcfg.model_copy(update={"k": 256, "sample_fraction": 1.0})
    codec = train_opq(view, m, iters=opq_iters, kcfg=codec_cfg) if rotate else train_pq(view, m, kcfg=codec_cfg)
    workers = 1 if kcfg is None else kcfg.workers
    codes = codec.encode(view, workers=workers)
    logger.info(f"Composite index ready: d_c={d_c}, k={k}, d_q={d_q}, m={m}, rerank_dim={rerank_dim}")
    return CompositeIndex(ivf=ivf, codec=codec, codes=codes, rerank_dim=rerank_dim)


def search_composite(
    index: CompositeIndex,
    query,
    params: SearchParams,
    shortlist: Optional[int] = None,
) -> SearchResult:
    return index.search(query, params, shortlist=shortlist)


def search_composite_batch(
    index: CompositeIndex,
    queries,
    params: SearchParams,
    shortlist: Optional[int] = None,
) -> List[SearchResult]:
    return index.search_batch(queries, params, shortlist=shortlist)
