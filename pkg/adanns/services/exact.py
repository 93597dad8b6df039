"""
Exact (brute-force) prefix search for adanns
Ground truth for every approximate path; ties break by lower id.
"""

from typing import List

import numpy as np

from ..core.distances import rank, squared_l2
from ..core.embeddings import EmbeddingSet, as_matrix, check_prefix
from ..core.exceptions import ConfigurationError, DimensionError
from ..models.results import SearchResult


def exact_search(database: EmbeddingSet, query: np.ndarray, d_s: int, topk: int) -> SearchResult:
    """Top-k over the whole database using d_s-prefix squared L2"""
    return exact_search_batch(database, np.asarray(query).reshape(1, -1), d_s, topk)[0]


def exact_search_batch(
    database: EmbeddingSet,
    queries,
    d_s: int,
    topk: int,
    chunk_queries: int = 256,
) -> List[SearchResult]:
    d_s = check_prefix(d_s, database.d, "scan dimension d_s")
    if topk < 1:
        raise ConfigurationError(f"topk must be >= 1, got {topk}")
    queries = as_matrix(queries, "queries")
    if queries.shape[1] < d_s:
        raise DimensionError(f"query dimension {queries.shape[1]} is shorter than d_s={d_s}")

    points = database.data[:, :d_s]
    ids = np.arange(database.n, dtype=np.int64)
    results: List[SearchResult] = []
    for start in range(0, queries.shape[0], chunk_queries):
        block = squared_l2(queries[start:start + chunk_queries, :d_s], points)
        for row in block:
            top_ids, top_dists = rank(ids, row, topk)
            results.append(SearchResult(top_ids, top_dists, underfilled=top_ids.shape[0] < topk))
    return results


def exact_neighbors(database: EmbeddingSet, queries, d_s: int, topk: int) -> np.ndarray:
    """(nq, topk) id matrix of exact neighbors (ground-truth table)"""
    return np.stack([r.ids for r in exact_search_batch(database, queries, d_s, topk)])
