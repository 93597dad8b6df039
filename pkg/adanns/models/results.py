"""
Result schemas for adanns: search results, frontier rows, error lines
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Ranked neighbors of one query (positional database ids)"""

    ids: np.ndarray
    distances: np.ndarray
    underfilled: bool = False

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def pairs(self) -> List[tuple]:
        return [(int(i), float(d)) for i, d in zip(self.ids, self.distances)]


# Fixed CSV column order for frontier tables
FRONTIER_COLUMNS = [
    "key",
    "family",
    "d_c",
    "d_s",
    "k",
    "n_p",
    "bytes",
    "rerank_dim",
    "top1",
    "recall_1_at_1",
    "cost",
    "build_seed",
    "status",
    "error",
]


class FrontierRow(BaseModel):
    """One evaluated sweep tuple"""

    family: str
    d_c: Optional[int] = None
    d_s: Optional[int] = None
    k: Optional[int] = None
    n_p: Optional[int] = None
    bytes: Optional[int] = None
    rerank_dim: Optional[int] = None
    top1: Optional[float] = None
    recall_1_at_1: Optional[float] = None
    cost: Optional[float] = None
    build_seed: Optional[int] = None
    status: str = Field(default="ok", description="ok | error | skipped")
    error: Optional[str] = None

    @property
    def key(self) -> str:
        parts = [self.family]
        for name in ("d_c", "d_s", "k", "n_p", "bytes", "rerank_dim"):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={value}")
        return "|".join(parts)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_record(self) -> dict:
        record = self.model_dump()
        record["key"] = self.key
        return {column: record.get(column) for column in FRONTIER_COLUMNS}


class ErrorLine(BaseModel):
    """Machine-readable error line printed by the CLI on failure"""

    error: str
    detail: str
    exit_code: int


class RunManifest(BaseModel):
    """Companion record of a sweep run"""

    tool: str
    version: str
    seed: int
    family: str
    columns: List[str]
    rows: int
    spec: dict
