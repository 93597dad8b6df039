"""
Lloyd's k-means for adanns
Shared by IVF (coarse clusters) and PQ (per-sub-space codebooks)
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from ..core.distances import nearest, squared_l2
from ..core.embeddings import as_matrix
from ..core.exceptions import DimensionError, InsufficientDataError
from ..models.configs import KmeansConfig


@dataclass(frozen=True, eq=False)
class Centroids:
    """Trained centroids with the objective of the final assignment"""

    data: np.ndarray
    objective: float
    history: List[float] = field(default_factory=list)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        if not np.isfinite(self.objective) or self.objective < 0:
            raise ValueError(f"objective must be finite and non-negative, got {self.objective}")

    @property
    def k(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def prefix(self, m: int) -> np.ndarray:
        return self.data[:, :m]


def assign(points, centroids, workers: int = 1) -> np.ndarray:
    """Nearest-centroid index per point; ties go to the lowest centroid index"""
    labels, _ = assign_with_distances(points, centroids, workers=workers)
    return labels


def assign_with_distances(points, centroids, workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    points = as_matrix(points)
    centers = centroids.data if isinstance(centroids, Centroids) else np.atleast_2d(centroids)
    if points.shape[1] != centers.shape[1]:
        raise DimensionError(f"points have dim {points.shape[1]}, centroids have dim {centers.shape[1]}")
    return nearest(points, centers, workers=workers)


def _init_kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = squared_l2(x[chosen[0]], x)[0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen center: pick an unused row
            unused = np.setdiff1d(np.arange(n), np.asarray(chosen), assume_unique=False)
            idx = int(rng.choice(unused))
        chosen.append(idx)
        closest = np.minimum(closest, squared_l2(x[idx], x)[0])
    return x[chosen].copy()


def _init_random(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    return x[rng.choice(x.shape[0], size=k, replace=False)].copy()


def _update(x: np.ndarray, labels: np.ndarray, dists: np.ndarray, k: int) -> np.ndarray:
    """Recompute means in fixed row order; repair empty clusters"""
    labels = labels.copy()
    dists = dists.copy()
    counts = np.bincount(labels, minlength=k)

    for empty in np.flatnonzero(counts == 0):
        # farthest point whose cluster keeps at least one other member
        donors = counts[labels] > 1
        if not donors.any():
            break
        candidates = np.where(donors, dists, -np.inf)
        far = int(np.argmax(candidates))
        counts[labels[far]] -= 1
        labels[far] = empty
        counts[empty] = 1
        dists[far] = 0.0

    # grouped sums over rows sorted stably by label: fixed accumulation order
    order = np.argsort(labels, kind="stable")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(x[order], starts, axis=0)
    centers = sums / counts[:, None]
    return centers.astype(np.float32)


def train(points, cfg: KmeansConfig, init_centroids: Optional[np.ndarray] = None) -> Centroids:
    """
    Lloyd iterations from k-means++ (or random-subset, or given) initial centroids.

    The recorded objective is the assignment cost before each update plus the
    cost of the final centroids; the sequence is non-increasing.
    """
    x = np.asarray(as_matrix(points), dtype=np.float64)
    n, dim = x.shape
    if n < cfg.k:
        raise InsufficientDataError(f"k-means needs at least k={cfg.k} points, got {n}")

    rng = np.random.default_rng(cfg.seed)
    if cfg.sample_fraction < 1.0:
        size = max(cfg.k, int(round(cfg.sample_fraction * n)))
        x = x[np.sort(rng.choice(n, size=size, replace=False))]

    if init_centroids is not None:
        centers = np.asarray(init_centroids, dtype=np.float32)
        if centers.shape != (cfg.k, dim):
            raise DimensionError(f"initial centroids must have shape {(cfg.k, dim)}, got {centers.shape}")
    elif cfg.init == "kmeans++":
        centers = _init_kmeans_plus_plus(x, cfg.k, rng).astype(np.float32)
    else:
        centers = _init_random(x, cfg.k, rng).astype(np.float32)

    history: List[float] = []
    converged = False
    for iteration in range(cfg.max_iters):
        labels, dists = nearest(x, centers, workers=cfg.workers)
        objective = float(dists.sum())
        history.append(objective)
        logger.debug(f"k-means k={cfg.k} dim={dim} iter={iteration} objective={objective:.6g}")
        if len(history) > 1 and history[-2] - objective <= cfg.tol * history[-2]:
            converged = True
            break
        centers = _update(x, labels, dists, cfg.k)

    if not converged:
        _, dists = nearest(x, centers, workers=cfg.workers)
        history.append(float(dists.sum()))

    logger.debug(f"k-means finished: k={cfg.k}, iterations={len(history)}, objective={history[-1]:.6g}")
    return Centroids(data=centers, objective=history[-1], history=history)


def lloyd_step(points, centroids: Centroids) -> Centroids:
    """One assign + update step starting from `centroids`"""
    x = np.asarray(as_matrix(points), dtype=np.float64)
    if x.shape[0] < centroids.k:
        raise InsufficientDataError(f"a Lloyd step needs at least k={centroids.k} points, got {x.shape[0]}")
    labels, dists = assign_with_distances(x, centroids)
    centers = _update(x, labels, dists, centroids.k)
    _, new_dists = nearest(x, centers)
    return Centroids(data=centers, objective=float(new_dists.sum()), history=[float(dists.sum()), float(new_dists.sum())])
