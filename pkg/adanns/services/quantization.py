"""
Product quantization for adanns
Handles PQ and OPQ codecs over any prefix dimension, asymmetric distance
computation (ADC), and the fixed-budget prefix search (AdANNS-OPQ).
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.linalg import orthogonal_procrustes

from ..config import QUANTIZATION_CONFIG, settings
from ..core.binary import ByteReader, ByteWriter
from ..core.distances import nearest, rank, squared_l2
from ..core.embeddings import EmbeddingSet, as_matrix, check_prefix
from ..core.exceptions import ConfigurationError, DimensionError, FormatError, MetricError
from ..models.configs import KmeansConfig, PqBudget
from ..models.results import SearchResult
from . import kmeans

PQ_MAGIC = b"ADPQ"
PQ_VERSION = 1
PQ_BITS = QUANTIZATION_CONFIG["bits"]
CODEBOOK_SIZE = QUANTIZATION_CONFIG["codebook_size"]


@dataclass(frozen=True, eq=False)
class PqCodec:
    """
    m codebooks of 256 codewords over contiguous d_q/m slices.

    With a rotation R (OPQ) vectors are coded in the rotated space y = R x;
    in row form Y = X R^T and decoding maps back with X = Y R.
    """

    d_q: int
    m: int
    codebooks: np.ndarray
    rotation: Optional[np.ndarray] = None
    subspace_objectives: List[float] = field(default_factory=list)
    opq_history: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.m < 1 or self.d_q % self.m:
            raise ConfigurationError(f"m={self.m} does not divide d_q={self.d_q}")
        books = np.ascontiguousarray(self.codebooks, dtype=np.float32)
        if books.shape != (self.m, CODEBOOK_SIZE, self.dsub):
            raise DimensionError(f"codebooks must have shape {(self.m, CODEBOOK_SIZE, self.dsub)}, got {books.shape}")
        books.flags.writeable = False
        object.__setattr__(self, "codebooks", books)
        if self.rotation is not None:
            rotation = np.ascontiguousarray(self.rotation, dtype=np.float64)
            if rotation.shape != (self.d_q, self.d_q):
                raise DimensionError(f"rotation must be {self.d_q}x{self.d_q}, got {rotation.shape}")
            rotation.flags.writeable = False
            object.__setattr__(self, "rotation", rotation)

    @property
    def b(self) -> int:
        return PQ_BITS

    @property
    def dsub(self) -> int:
        return self.d_q // self.m

    @property
    def code_bytes(self) -> int:
        return self.m

    @property
    def is_opq(self) -> bool:
        return self.rotation is not None

    def _slice(self, j: int) -> slice:
        return slice(j * self.dsub, (j + 1) * self.dsub)

    def _rotate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x @ self.rotation.T if self.rotation is not None else x

    def _points(self, points) -> np.ndarray:
        x = as_matrix(points, "points")
        if x.shape[1] != self.d_q:
            raise DimensionError(f"codec expects {self.d_q}-dim vectors, got {x.shape[1]}")
        return x

    # ----------------------------------------------------------- coding

    def encode(self, points, workers: int = 1) -> np.ndarray:
        """(n, m) uint8 codes: nearest codeword per sub-space, ties to the lower index"""
        y = self._rotate(self._points(points))
        codes = np.empty((y.shape[0], self.m), dtype=np.uint8)
        for j in range(self.m):
            labels, _ = nearest(y[:, self._slice(j)], self.codebooks[j], workers=workers)
            codes[:, j] = labels
        return codes

    def decode(self, codes: np.ndarray) -> np.ndarray:
        codes = self._codes(codes)
        y = np.concatenate(
            [self.codebooks[j][codes[:, j]].astype(np.float64) for j in range(self.m)], axis=1
        )
        return y @ self.rotation if self.rotation is not None else y

    def _codes(self, codes: np.ndarray) -> np.ndarray:
        codes = np.atleast_2d(np.asarray(codes))
        if codes.shape[1] != self.m:
            raise DimensionError(f"codes must have {self.m} columns, got {codes.shape[1]}")
        return codes.astype(np.intp, copy=False)

    def reconstruction_error(self, points) -> np.ndarray:
        """Per-point squared error of decode(encode(x))"""
        x = np.asarray(self._points(points), dtype=np.float64)
        residual = x - self.decode(self.encode(x))
        return np.einsum("ij,ij->i", residual, residual)

    # -------------------------------------------------------------- ADC

    def adc_tables(self, query) -> np.ndarray:
        """(m, 256) squared distances from each query sub-vector to every codeword"""
        query = np.asarray(query).reshape(-1)
        if query.shape[0] < self.d_q:
            raise DimensionError(f"query has {query.shape[0]} dims, codec needs {self.d_q}")
        y = self._rotate(query[: self.d_q].reshape(1, -1))[0]
        return np.stack([squared_l2(y[self._slice(j)], self.codebooks[j])[0] for j in range(self.m)])

    def adc_distance(self, query, codes: np.ndarray, tables: Optional[np.ndarray] = None) -> np.ndarray:
        tables = self.adc_tables(query) if tables is None else tables
        codes = self._codes(codes)
        return tables[np.arange(self.m), codes].sum(axis=1)

    def adc_search(self, codes: np.ndarray, query, topk: int, ids: Optional[np.ndarray] = None) -> SearchResult:
        """Exhaustive ADC scan over `codes`; row i carries id ids[i] (default i)"""
        if topk < 1:
            raise ConfigurationError(f"topk must be >= 1, got {topk}")
        dists = self.adc_distance(query, codes)
        ids = np.arange(dists.shape[0], dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
        top_ids, top = rank(ids, dists, topk)
        return SearchResult(top_ids, top, underfilled=top_ids.shape[0] < topk)

    # ---------------------------------------------------- serialization

    def to_bytes(self) -> bytes:
        writer = (
            ByteWriter()
            .magic(PQ_MAGIC)
            .u32(PQ_VERSION)
            .u32(self.d_q)
            .u32(self.m)
            .u8(self.b)
            .u8(1 if self.rotation is not None else 0)
        )
        if self.rotation is not None:
            writer.array(self.rotation, "<f8")
        return writer.array(self.codebooks, "<f4").getvalue()

    @classmethod
    def from_reader(cls, reader: ByteReader) -> "PqCodec":
        reader.expect_magic(PQ_MAGIC)
        reader.expect_version(PQ_VERSION)
        start = reader.offset
        d_q = reader.u32("d_q")
        m = reader.u32("m")
        b = reader.u8("b")
        if m == 0 or d_q == 0 or d_q % m or b != PQ_BITS:
            raise FormatError(f"invalid codec header d_q={d_q}, m={m}, b={b}", offset=start, path=reader.path)
        has_rotation = reader.u8("rotation flag")
        if has_rotation not in (0, 1):
            raise FormatError(f"invalid rotation flag {has_rotation}", offset=reader.offset - 1, path=reader.path)
        rotation = reader.array(d_q * d_q, "<f8", "rotation block").reshape(d_q, d_q) if has_rotation else None
        books = reader.array(m * CODEBOOK_SIZE * (d_q // m), "<f4", "codebook block")
        return cls(d_q=d_q, m=m, codebooks=books.reshape(m, CODEBOOK_SIZE, d_q // m), rotation=rotation)

    @classmethod
    def from_bytes(cls, buffer: bytes, path: Optional[str] = None) -> "PqCodec":
        reader = ByteReader(buffer, path=path)
        codec = cls.from_reader(reader)
        reader.expect_end()
        return codec

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PqCodec":
        return cls.from_bytes(Path(path).read_bytes(), path=str(path))


# ---------------------------------------------------------------- training

def _subspace_config(kcfg: Optional[KmeansConfig], j: int, k: int) -> KmeansConfig:
    base = kcfg or KmeansConfig(k=k)
    return base.model_copy(update={"k": k, "seed": base.seed + j})


def _train_codebooks(
    y: np.ndarray,
    m: int,
    kcfg: Optional[KmeansConfig],
    warm: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, List[float]]:
    """
    One k-means per sub-space slice of y. With fewer than 256 points each
    codebook holds every point and is padded by repeating codeword 0
    (the pad is never selected: ties go to the lower index).
    """
    n, d = y.shape
    dsub = d // m
    k = min(CODEBOOK_SIZE, n)
    books = np.empty((m, CODEBOOK_SIZE, dsub), dtype=np.float32)
    objectives: List[float] = []
    for j in range(m):
        sub = y[:, j * dsub:(j + 1) * dsub]
        init = None if warm is None else warm[j, :k]
        centroids = kmeans.train(sub, _subspace_config(kcfg, j, k), init_centroids=init)
        books[j, :k] = centroids.data
        books[j, k:] = centroids.data[0]
        # objective of the stored float32 codebook over every point
        objectives.append(float(nearest(sub, books[j])[1].sum()))
    return books, objectives


def _check_divisible(d: int, m: int) -> None:
    if m < 1 or d % m:
        raise ConfigurationError(f"m={m} does not divide dimension {d}")


def train_pq(points, m: int, kcfg: Optional[KmeansConfig] = None) -> PqCodec:
    """Plain PQ: an independent 256-word codebook per sub-space"""
    x = np.asarray(as_matrix(points, "points"), dtype=np.float64)
    _check_divisible(x.shape[1], m)
    logger.info(f"Training PQ: n={x.shape[0]}, d_q={x.shape[1]}, m={m}")
    books, objectives = _train_codebooks(x, m, kcfg)
    return PqCodec(d_q=x.shape[1], m=m, codebooks=books, subspace_objectives=objectives)


def train_opq(
    points,
    m: int,
    iters: int = settings.opq_iters,
    kcfg: Optional[KmeansConfig] = None,
) -> PqCodec:
    """
    Non-parametric OPQ: alternate a PQ step on the rotated data with an
    orthogonal Procrustes step for R, starting from R = I.

    `iters` counts PQ steps; iters = 1 is plain PQ with an identity rotation.
    Each PQ step after the first warm-starts from the previous codebooks, so
    the recorded objective ||X R^T - decode(encode(X R^T))||^2 never increases.
    """
    if iters < 1:
        raise ConfigurationError(f"OPQ needs at least one iteration, got {iters}")
    x = np.asarray(as_matrix(points, "points"), dtype=np.float64)
    n, d = x.shape
    _check_divisible(d, m)
    dsub = d // m
    logger.info(f"Training OPQ: n={n}, d_q={d}, m={m}, iters={iters}")

    rotation = np.eye(d)
    y = x
    books, objectives = _train_codebooks(y, m, kcfg)
    history = [float(sum(objectives))]
    logger.debug(f"OPQ iter=0 objective={history[-1]:.6g}")

    for it in range(1, iters):
        codes = np.stack([nearest(y[:, j * dsub:(j + 1) * dsub], books[j])[0] for j in range(m)], axis=1)
        y_hat = np.concatenate([books[j][codes[:, j]].astype(np.float64) for j in range(m)], axis=1)
        # min ||X W - Y_hat|| over orthogonal W; R = W^T
        omega, _ = orthogonal_procrustes(x, y_hat)
        rotation = omega.T
        y = x @ rotation.T
        books, objectives = _train_codebooks(y, m, kcfg, warm=books)
        history.append(float(sum(objectives)))
        logger.debug(f"OPQ iter={it} objective={history[-1]:.6g}")

    return PqCodec(
        d_q=d,
        m=m,
        codebooks=books,
        rotation=rotation,
        subspace_objectives=objectives,
        opq_history=history,
    )


# Functional entry points

def encode(codec: PqCodec, points, workers: int = 1) -> np.ndarray:
    return codec.encode(points, workers=workers)


def decode(codec: PqCodec, codes: np.ndarray) -> np.ndarray:
    return codec.decode(codes)


def adc_tables(codec: PqCodec, query) -> np.ndarray:
    return codec.adc_tables(query)


def adc_distance(codec: PqCodec, query, codes: np.ndarray) -> np.ndarray:
    return codec.adc_distance(query, codes)


def adc_search(codec: PqCodec, codes: np.ndarray, query, topk: int) -> SearchResult:
    return codec.adc_search(codes, query, topk)


def reconstruction_error(codec: PqCodec, points) -> np.ndarray:
    return codec.reconstruction_error(points)


# ------------------------------------------------------------ AdANNS-OPQ

REPORT_COLUMNS = ["d_s", "m", "top1", "mse", "status"]


@dataclass
class AdannsOpqReport:
    """Per-candidate outcome of a fixed-budget prefix search"""

    bytes: int
    rows: List[dict]
    best_d_s: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def accuracy(self) -> dict:
        """d_s -> top-1 for every evaluated candidate"""
        return {row["d_s"]: row["top1"] for row in self.rows if row["status"] == "ok"}


def opq_top1(codec: PqCodec, codes: np.ndarray, db_labels: np.ndarray, queries: EmbeddingSet) -> float:
    """Top-1 label accuracy of an exhaustive ADC scan"""
    if queries.n == 0:
        raise MetricError("no queries to evaluate")
    hits = 0
    for query, label in zip(queries.data, queries.labels):
        result = codec.adc_search(codes, query, topk=1)
        hits += int(len(result) > 0 and db_labels[result.ids[0]] == label)
    return hits / queries.n


def train_adanns_opq(
    embeddings: EmbeddingSet,
    budget: PqBudget,
    queries: EmbeddingSet,
    kcfg: Optional[KmeansConfig] = None,
    opq_iters: int = settings.opq_iters,
) -> Tuple[PqCodec, AdannsOpqReport]:
    """
    Train an OPQ codec with m = budget.bytes on every candidate prefix d_s,
    score each by top-1 on the labeled queries and keep the best.
    Ties go to the smaller d_s; indivisible candidates are skipped.
    """
    candidates: List[int] = list(dict.fromkeys(budget.candidate_dims))
    if not candidates:
        raise ConfigurationError("AdANNS-OPQ needs at least one candidate dimension")
    for d_s in candidates:
        check_prefix(d_s, embeddings.d, "candidate dimension")
    if not embeddings.has_labels or not queries.has_labels:
        raise MetricError("AdANNS-OPQ scoring needs labels on the database and the queries")
    if queries.n == 0:
        raise MetricError("AdANNS-OPQ scoring needs at least one query")

    m = budget.bytes
    rows: List[dict] = []
    best: Optional[Tuple[float, int, PqCodec]] = None
    for d_s in sorted(candidates):
        if d_s % m:
            logger.warning(f"Skipping d_s={d_s}: not divisible by m={m}")
            rows.append({"d_s": d_s, "m": m, "top1": None, "mse": None, "status": "skipped"})
            continue
        view = embeddings.prefix(d_s)
        codec = train_opq(view, m, iters=opq_iters, kcfg=kcfg)
        codes = codec.encode(view)
        top1 = opq_top1(codec, codes, embeddings.labels, queries)
        mse = float(np.mean(codec.reconstruction_error(view)))
        logger.info(f"AdANNS-OPQ bytes={m} d_s={d_s}: top1={top1:.4f}, mse={mse:.6g}")
        rows.append({"d_s": d_s, "m": m, "top1": top1, "mse": mse, "status": "ok"})
        if best is None or top1 > best[0]:
            best = (top1, d_s, codec)

    if best is None:
        raise ConfigurationError(f"no candidate dimension in {candidates} is divisible by m={m}")
    logger.info(f"AdANNS-OPQ bytes={m}: best d_s={best[1]} top1={best[0]:.4f}")
    return best[2], AdannsOpqReport(bytes=m, rows=rows, best_d_s=best[1])
