"""
Evaluation metrics for adanns
Handles label-based accuracy (top-1, Recall@k, mAP@k), neighbor recall,
relative contrast, cluster-distribution distance and the analytic cost model.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.spatial.distance import cdist

from ..core.embeddings import as_matrix
from ..core.exceptions import MetricError
from ..models.configs import CostParams
from ..models.results import SearchResult

# Label metrics
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Retrieved id lists joined with query and database labels"""

    retrieved: List[np.ndarray]
    query_labels: Optional[np.ndarray]
    db_labels: Optional[np.ndarray]
    num_classes: Optional[int] = None
    metrics: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.retrieved = [np.asarray(ids, dtype=np.int64).reshape(-1) for ids in self.retrieved]
        if self.query_labels is not None:
            self.query_labels = np.asarray(self.query_labels, dtype=np.int64).reshape(-1)
            if self.query_labels.shape[0] != len(self.retrieved):
                raise MetricError(
                    f"{len(self.retrieved)} retrieved lists for {self.query_labels.shape[0]} query labels"
                )
        if self.db_labels is not None:
            self.db_labels = np.asarray(self.db_labels, dtype=np.int64).reshape(-1)
            for row, ids in enumerate(self.retrieved):
                if ids.size and (ids.min() < 0 or ids.max() >= self.db_labels.shape[0]):
                    raise MetricError(f"query {row} retrieved an id outside [0, {self.db_labels.shape[0]})")
            if self.num_classes is None:
                self.num_classes = int(np.unique(self.db_labels).shape[0])

    @property
    def n_queries(self) -> int:
        return len(self.retrieved)

    @property
    def n_db(self) -> int:
        return 0 if self.db_labels is None else int(self.db_labels.shape[0])

    @property
    def depth(self) -> int:
        return max((ids.shape[0] for ids in self.retrieved), default=0)

    @property
    def empty_queries(self) -> np.ndarray:
        return np.array([row for row, ids in enumerate(self.retrieved) if ids.size == 0], dtype=np.int64)

    def _require_labels(self) -> None:
        if self.query_labels is None or self.db_labels is None:
            raise MetricError("label metrics need both query and database labels")

    def hits(self, k: int) -> np.ndarray:
        """(nq, k) boolean matrix: rank i of query q shares its label; missing ranks are False"""
        self._require_labels()
        if k < 1:
            raise MetricError(f"k must be >= 1, got {k}")
        if k > self.depth:
            raise MetricError(f"k={k} exceeds the retrieved depth {self.depth}")
        table = np.zeros((self.n_queries, k), dtype=bool)
        for row, ids in enumerate(self.retrieved):
            top = ids[:k]
            table[row, :top.shape[0]] = self.db_labels[top] == self.query_labels[row]
        return table

    def relevant_counts(self) -> np.ndarray:
        """Database items sharing each query's label"""
        self._require_labels()
        classes, counts = np.unique(self.db_labels, return_counts=True)
        lookup = dict(zip(classes.tolist(), counts.tolist()))
        return np.array([lookup.get(int(label), 0) for label in self.query_labels], dtype=np.int64)

    def summary(self, ks: Iterable[int] = (1, 10)) -> Dict[str, float]:
        """Every label metric at each k that fits the retrieved depth"""
        values = {"top1": top1_accuracy(self)}
        for k in ks:
            if k > self.depth:
                continue
            values[f"recall@{k}"] = recall_at_k(self, k)
            values[f"class_recall@{k}"] = class_recall_at_k(self, k)
            values[f"precision@{k}"] = precision_at_k(self, k)
            values[f"map@{k}"] = map_at_k(self, k)
        self.metrics.update(values)
        return values

    def to_csv(self, path: Union[str, Path]) -> None:
        """One row per metric"""
        frame = pd.DataFrame({"metric": list(self.metrics), "value": list(self.metrics.values())})
        frame.to_csv(path, index=False)

    def to_jsonl(self, path: Union[str, Path], k: Optional[int] = None) -> None:
        """One JSON object per query: label, retrieved ids and correctness per rank"""
        k = k or self.depth
        records = []
        for row, ids in enumerate(self.retrieved):
            record = {"query": row, "retrieved": ids[:k].tolist()}
            if self.query_labels is not None and self.db_labels is not None:
                record["label"] = int(self.query_labels[row])
                record["correct"] = (self.db_labels[ids[:k]] == self.query_labels[row]).tolist()
            records.append(record)
        pd.DataFrame(records).to_json(path, orient="records", lines=True)


def build_report(
    results: Sequence[Union[SearchResult, np.ndarray, Sequence[int]]],
    query_labels: Optional[np.ndarray],
    db_labels: Optional[np.ndarray],
    num_classes: Optional[int] = None,
) -> EvalReport:
    """Join search output with labels; negative ids (padding) are dropped"""
    retrieved = []
    for result in results:
        ids = result.ids if isinstance(result, SearchResult) else np.asarray(result, dtype=np.int64)
        retrieved.append(ids[ids >= 0])
    return EvalReport(retrieved=retrieved, query_labels=query_labels, db_labels=db_labels, num_classes=num_classes)


def top1_accuracy(report: EvalReport) -> float:
    """Fraction of queries whose rank-1 neighbor shares the query label"""
    report._require_labels()
    if report.n_queries == 0:
        raise MetricError("no queries to evaluate")
    empty = report.empty_queries
    if empty.size:
        logger.warning(f"{empty.size} queries retrieved nothing and count as incorrect")
    correct = sum(
        1 for row, ids in enumerate(report.retrieved)
        if ids.size and report.db_labels[ids[0]] == report.query_labels[row]
    )
    return correct / report.n_queries


def recall_at_k(report: EvalReport, k: int) -> float:
    """(sum of correct@k / |Q|) * (num_classes / N_D)"""
    correct = report.hits(k).sum(axis=1)
    return float(correct.sum() / report.n_queries * (report.num_classes / report.n_db))


def class_recall_at_k(report: EvalReport, k: int) -> float:
    """Conventional recall: correct@k over the number of same-label database items"""
    correct = report.hits(k).sum(axis=1)
    relevant = report.relevant_counts()
    per_query = np.divide(correct, relevant, out=np.zeros(correct.shape, dtype=np.float64), where=relevant > 0)
    return float(per_query.mean())


def precision_at_k(report: EvalReport, k: int) -> float:
    return float(report.hits(k).sum(axis=1).mean() / k)


def average_precision(hits: np.ndarray, relevant: int) -> float:
    """AP of one ranked hit vector truncated at len(hits), denominator min(k, relevant)"""
    k = hits.shape[0]
    denominator = min(k, relevant)
    if denominator == 0:
        return 0.0
    ranks = np.arange(1, k + 1)
    precisions = np.cumsum(hits) / ranks
    return float(np.sum(precisions * hits) / denominator)


def map_at_k(report: EvalReport, k: int) -> float:
    hits = report.hits(k)
    relevant = report.relevant_counts()
    return float(np.mean([average_precision(hits[row], int(relevant[row])) for row in range(report.n_queries)]))


# Neighbor recall
# ---------------------------------------------------------------------------


def k_recall_at_n(retrieved: Sequence[int], ground_truth: Sequence[int], k: Optional[int] = None) -> float:
    """|retrieved ∩ ground_truth[:k]| / k"""
    ground_truth = np.asarray(ground_truth, dtype=np.int64).reshape(-1)
    k = ground_truth.shape[0] if k is None else k
    if k < 1 or ground_truth.shape[0] == 0:
        raise MetricError("k-Recall@N needs a non-empty ground truth")
    if k > ground_truth.shape[0]:
        raise MetricError(f"k={k} exceeds the ground-truth length {ground_truth.shape[0]}")
    truth = np.unique(ground_truth[:k])
    found = np.intersect1d(np.asarray(retrieved, dtype=np.int64).reshape(-1), truth)
    return found.shape[0] / k


def mean_k_recall_at_n(
    retrieved: Sequence[Sequence[int]],
    ground_truth: Sequence[Sequence[int]],
    k: int,
    n: Optional[int] = None,
) -> float:
    """Mean k-Recall@N over queries, truncating each retrieved list to its first n ids"""
    if len(retrieved) != len(ground_truth):
        raise MetricError(f"{len(retrieved)} retrieved lists for {len(ground_truth)} ground-truth lists")
    if len(retrieved) == 0:
        raise MetricError("no queries to evaluate")
    values = []
    for ids, truth in zip(retrieved, ground_truth):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        ids = ids[ids >= 0]
        values.append(k_recall_at_n(ids if n is None else ids[:n], truth, k))
    return float(np.mean(values))


# Relative contrast
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelativeContrast:
    value: float
    mean_dmean: float
    mean_dmin: float
    n_zero: int


def relative_contrast(
    database,
    queries,
    query_ids: Optional[Sequence[int]] = None,
    chunk_queries: int = 256,
) -> RelativeContrast:
    """
    C_r = E_q[D_mean] / E_q[D_min] with Euclidean distances.
    query_ids[i] >= 0 names the database row that is query i itself; it is
    left out of both D_min and D_mean.
    """
    points = np.asarray(as_matrix(database, "database"), dtype=np.float64)
    queries = np.asarray(as_matrix(queries, "queries"), dtype=np.float64)
    if points.shape[0] == 0:
        raise MetricError("relative contrast needs a non-empty database")
    if points.shape[1] != queries.shape[1]:
        raise MetricError(f"database dim {points.shape[1]} != query dim {queries.shape[1]}")
    exclude = None if query_ids is None else np.asarray(query_ids, dtype=np.int64).reshape(-1)
    if exclude is not None and exclude.shape[0] != queries.shape[0]:
        raise MetricError(f"{exclude.shape[0]} query ids for {queries.shape[0]} queries")

    dmin = np.empty(queries.shape[0])
    dmean = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], chunk_queries):
        block = cdist(queries[start:start + chunk_queries], points, metric="euclidean")
        for offset, row in enumerate(block):
            q = start + offset
            if exclude is not None and 0 <= exclude[q] < points.shape[0]:
                row = np.delete(row, exclude[q])
            if row.size == 0:
                raise MetricError(f"query {q} has no database points left after exclusion")
            dmin[q] = row.min()
            dmean[q] = row.mean()

    n_zero = int(np.count_nonzero(dmin == 0))
    if n_zero:
        logger.warning(f"{n_zero} queries coincide with a database point (D_min = 0)")
    mean_dmin = float(dmin.mean())
    if mean_dmin == 0:
        raise MetricError("every query has D_min = 0; relative contrast is undefined")
    mean_dmean = float(dmean.mean())
    return RelativeContrast(value=mean_dmean / mean_dmin, mean_dmean=mean_dmean, mean_dmin=mean_dmin, n_zero=n_zero)


# Cluster distributions
# ---------------------------------------------------------------------------


def cluster_size_distribution(counts: Sequence[float]) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64).reshape(-1)
    if counts.size == 0:
        raise MetricError("empty distribution")
    if np.any(counts < 0):
        raise MetricError("distribution has negative mass")
    total = counts.sum()
    if total <= 0:
        raise MetricError("distribution has zero total mass")
    return counts / total


def tv_distance(p: Sequence[float], q: Sequence[float]) -> float:
    """Half the L1 distance between two distributions; raw counts are normalized first"""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape != q.shape:
        raise MetricError(f"support sizes differ: {p.shape[0]} vs {q.shape[0]}")
    value = 0.5 * float(np.abs(cluster_size_distribution(p) - cluster_size_distribution(q)).sum())
    return min(max(value, 0.0), 1.0)


# Cost model (FLOPs per query)
# ---------------------------------------------------------------------------


def ivf_query_cost(c: CostParams) -> float:
    """d_s*k centroid distances plus n_p*d_s*N_D/k for the scanned lists"""
    return c.d_s * c.k + c.n_p * c.d_s * c.n_db / c.k


def adc_query_cost(d_q: int, m: int, n_db: int) -> float:
    """256*d_q to fill the lookup tables plus m lookups per database code"""
    if min(d_q, m, n_db) < 1:
        raise MetricError("cost parameters must be positive")
    return float(256 * d_q + m * n_db)


def composite_query_cost(
    d_c: int,
    k: int,
    n_p: int,
    n_db: int,
    d_q: int,
    m: int,
    shortlist: int = 0,
    rerank_dim: int = 0,
) -> float:
    if min(d_c, k, n_p, n_db, d_q, m) < 1:
        raise MetricError("cost parameters must be positive")
    if n_p > k:
        raise MetricError(f"n_p ({n_p}) exceeds k ({k})")
    return float(d_c * k + 256 * d_q + n_p * m * n_db / k + shortlist * rerank_dim)
