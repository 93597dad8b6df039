"""
Distance kernels shared by every search path

All distances are squared L2 computed pairwise in float64 by scipy's cdist.
Each pair is accumulated independently of the batch it appears in, so a
subset scan and a full scan produce bit-identical values for the same pair.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from ..config import SEARCH_CONFIG


def squared_l2(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """(nq, n) matrix of squared L2 distances"""
    queries = np.atleast_2d(queries)
    points = np.atleast_2d(points)
    return cdist(queries, points, metric="sqeuclidean")


def squared_l2_to(query: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Squared L2 distances from one query to each row of points"""
    return squared_l2(np.asarray(query).reshape(1, -1), points)[0]


def _chunk_bounds(n: int, chunk_rows: int):
    return [(start, min(start + chunk_rows, n)) for start in range(0, n, chunk_rows)]


def nearest(
    points: np.ndarray,
    centers: np.ndarray,
    chunk_rows: Optional[int] = None,
    workers: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Index of the nearest center for each point, and the squared distance to it.

    Ties resolve to the lowest center index (np.argmin keeps the first minimum).
    Rows are processed in chunks; chunks may run on a thread pool, which
    does not change any per-row result.
    """
    chunk_rows = chunk_rows or SEARCH_CONFIG["chunk_rows"]
    n = points.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)

    def run(bounds):
        start, stop = bounds
        dists = squared_l2(points[start:stop], centers)
        idx = np.argmin(dists, axis=1)
        labels[start:stop] = idx
        best[start:stop] = dists[np.arange(stop - start), idx]

    chunks = _chunk_bounds(n, chunk_rows)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, chunks))
    else:
        for bounds in chunks:
            run(bounds)
    return labels, best


def rank(ids: np.ndarray, distances: np.ndarray, topk: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Sort by ascending distance, ties by lower id; keep the first topk"""
    if topk is not None and topk < distances.shape[0]:
        # keep everything up to the topk-th smallest value, ties included
        threshold = np.partition(distances, topk - 1)[topk - 1]
        keep = np.flatnonzero(distances <= threshold)
        ids, distances = ids[keep], distances[keep]
    order = np.lexsort((ids, distances))
    if topk is not None:
        order = order[:topk]
    return ids[order], distances[order]
