"""
Schemas for adanns
"""

from .configs import (
    CostParams,
    DatasetSource,
    KmeansConfig,
    PqBudget,
    RunConfig,
    SearchParams,
    SweepSpec,
    SyntheticMrSpec,
    build_model,
)
from .results import FRONTIER_COLUMNS, ErrorLine, FrontierRow, RunManifest, SearchResult

__all__ = [
    "CostParams",
    "DatasetSource",
    "KmeansConfig",
    "PqBudget",
    "RunConfig",
    "SearchParams",
    "SweepSpec",
    "SyntheticMrSpec",
    "build_model",
    "FRONTIER_COLUMNS",
    "ErrorLine",
    "FrontierRow",
    "RunManifest",
    "SearchResult",
]
