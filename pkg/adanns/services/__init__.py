"""
Services for adanns
"""

from .composite import CompositeIndex, build_composite, search_composite, search_composite_batch
from .exact import exact_neighbors, exact_search, exact_search_batch
from .ivf import IvfIndex
from .kmeans import Centroids
from .metrics import EvalReport, build_report
from .quantization import AdannsOpqReport, PqCodec, train_adanns_opq, train_opq, train_pq
from .sweep import SweepRunner, frontier_dominates, pareto_frontier, run_sweep
from .synthetic import generate_rigid_proxy, generate_synthetic_mr

__all__ = [
    "CompositeIndex",
    "build_composite",
    "search_composite",
    "search_composite_batch",
    "exact_neighbors",
    "exact_search",
    "exact_search_batch",
    "IvfIndex",
    "Centroids",
    "EvalReport",
    "build_report",
    "AdannsOpqReport",
    "PqCodec",
    "train_adanns_opq",
    "train_opq",
    "train_pq",
    "SweepRunner",
    "frontier_dominates",
    "pareto_frontier",
    "run_sweep",
    "generate_rigid_proxy",
    "generate_synthetic_mr",
]
