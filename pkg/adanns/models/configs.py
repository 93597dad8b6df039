"""
Parameter and configuration schemas for adanns
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..config import settings
from ..core.exceptions import ConfigurationError

ModelT = TypeVar("ModelT", bound=BaseModel)

IndexFamily = Literal["ivf", "adanns-ivf", "adanns-ivf-d", "mg-ivf-rr", "opq-exhaustive", "composite"]


def build_model(model_cls: Type[ModelT], data: Dict[str, Any]) -> ModelT:
    """Validate `data` into `model_cls`, reporting failures as ConfigurationError"""
    try:
        return model_cls.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or model_cls.__name__}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigurationError(f"invalid {model_cls.__name__}: {problems}") from exc


class KmeansConfig(BaseModel):
    """Lloyd's k-means parameters"""
    model_config = ConfigDict(frozen=True)

    k: int = Field(..., ge=1, description="Cluster count")
    max_iters: int = Field(default=settings.kmeans_max_iters, ge=1, description="Iteration cap")
    tol: float = Field(default=settings.kmeans_tol, ge=0.0, description="Relative objective-improvement stop threshold")
    seed: int = Field(default=0, ge=0, description="RNG seed")
    init: Literal["kmeans++", "random"] = Field(default="kmeans++", description="Initialization rule")
    sample_fraction: float = Field(default=1.0, gt=0.0, le=1.0, description="Fraction of points used for training")
    workers: int = Field(default=1, ge=1, description="Threads for the assignment step")


class SearchParams(BaseModel):
    """Per-query search parameters"""
    model_config = ConfigDict(frozen=True)

    d_s: int = Field(..., ge=1, description="Linear-scan prefix dimension")
    n_p: int = Field(default=1, ge=1, description="Number of probed clusters")
    topk: int = Field(default=10, ge=1, description="Neighbors to return")
    d_shortlist: Optional[int] = Field(
        default=None, ge=1, description="Probe-selection prefix (<= d_c); None uses d_c"
    )


class SyntheticMrSpec(BaseModel):
    """Synthetic nested-embedding generator parameters"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Database size")
    d: int = Field(..., ge=1, description="Full dimensionality")
    num_classes: int = Field(default=10, ge=1)
    n_queries: Optional[int] = Field(default=None, ge=1, description="Query count; default max(1, n // 10)")
    variance_decay: float = Field(default=0.5, ge=0.0, description="alpha: coordinate j scales as (j+1)^-alpha")
    class_sep: float = Field(default=8.0, ge=0.0, description="Expected distance between class means")
    noise_std: float = Field(default=1.0, gt=0.0, description="Noise standard deviation of coordinate 0")
    noise_decay_ratio: float = Field(default=0.5, ge=0.0, description="Noise decays as (j+1)^-(alpha*ratio)")
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _classes_fit(self):
        if self.num_classes > self.n:
            raise ValueError(f"num_classes ({self.num_classes}) exceeds n ({self.n})")
        return self

    @property
    def query_count(self) -> int:
        return self.n_queries if self.n_queries is not None else max(1, self.n // 10)


class PqBudget(BaseModel):
    """Fixed code budget and the prefix dimensions to try under it"""
    model_config = ConfigDict(frozen=True)

    bytes: int = Field(..., ge=1, description="Code size in bytes (= m with b = 8)")
    candidate_dims: List[int] = Field(default_factory=list, description="Prefix dimensions d_s to try")


class CostParams(BaseModel):
    """Inputs of the IVF per-query cost model"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    d_s: int = Field(..., gt=0)
    k: int = Field(..., gt=0)
    n_p: int = Field(default=1, gt=0)
    n_db: int = Field(..., gt=0, alias="N_D", description="Database size N_D")

    @model_validator(mode="after")
    def _probes_fit(self):
        if self.n_p > self.k:
            raise ValueError(f"n_p ({self.n_p}) exceeds k ({self.k})")
        return self


class DatasetSource(BaseModel):
    """Where a sweep or CLI run gets its vectors from"""
    model_config = ConfigDict(frozen=True)

    synthetic: Optional[SyntheticMrSpec] = None
    base_path: Optional[Path] = None
    query_path: Optional[Path] = None
    base_labels_path: Optional[Path] = None
    query_labels_path: Optional[Path] = None
    metric: Literal["l2", "cosine"] = "l2"

    @model_validator(mode="after")
    def _one_source(self):
        has_files = self.base_path is not None or self.query_path is not None
        if self.synthetic is None and not has_files:
            raise ValueError("dataset needs either a synthetic spec or base/query paths")
        if self.synthetic is not None and has_files:
            raise ValueError("dataset takes a synthetic spec or file paths, not both")
        if has_files and (self.base_path is None or self.query_path is None):
            raise ValueError("file datasets need both base_path and query_path")
        return self


class SweepSpec(BaseModel):
    """Grid sweep over index parameters"""
    model_config = ConfigDict(frozen=True)

    dataset: DatasetSource
    family: IndexFamily = "adanns-ivf"
    d_c_grid: Optional[List[int]] = Field(default=None, description="Defaults to the prefix ladder within d")
    d_s_grid: Optional[List[int]] = Field(default=None, description="Defaults to the prefix ladder within d")
    k_grid: Optional[List[int]] = Field(default=None, description="Defaults to the prefix ladder within n")
    n_p_grid: List[int] = Field(default_factory=lambda: [1])
    budgets: List[int] = Field(default_factory=lambda: [8, 16, 32, 64], description="PQ bytes per vector")
    rerank_dim: int = Field(default=0, ge=0)
    shortlist: Optional[int] = Field(default=None, ge=1)
    topk: int = Field(default=10, ge=1)
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    max_iters: int = Field(default=settings.kmeans_max_iters, ge=1)
    opq_iters: int = Field(default=settings.opq_iters, ge=1)
    output: Optional[Path] = None
    resume: bool = False
    progress: bool = True

    @model_validator(mode="after")
    def _non_empty(self):
        for name in ("d_c_grid", "d_s_grid", "k_grid", "n_p_grid", "budgets"):
            grid = getattr(self, name)
            if grid is not None and len(grid) == 0:
                raise ValueError(f"{name} must not be empty")
            if grid is not None and any(v < 1 for v in grid):
                raise ValueError(f"{name} values must be >= 1")
        return self


Subcommand = Literal["gen", "build", "search", "eval", "sweep"]

_REQUIRED_INPUTS: Dict[str, List[str]] = {
    "gen": [],
    "build": ["base"],
    "search": ["index", "base", "queries"],
    "eval": ["results", "query_labels", "base_labels"],
    "sweep": [],
}
_REQUIRED_OUTPUTS: Dict[str, List[str]] = {
    "gen": ["out_dir"],
    "build": ["out"],
    "search": ["out_ids"],
    "eval": ["out"],
    "sweep": ["out"],
}
_OPTIONAL_INPUTS = ["groundtruth"]


class RunConfig(BaseModel):
    """Fully resolved settings for one CLI invocation"""
    model_config = ConfigDict(frozen=True)

    subcommand: Subcommand
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    verbosity: int = Field(default=0, ge=0)
    metric: Literal["l2", "cosine"] = "l2"

    # input paths
    base: Optional[Path] = None
    base_labels: Optional[Path] = None
    queries: Optional[Path] = None
    query_labels: Optional[Path] = None
    index: Optional[Path] = None
    results: Optional[Path] = None
    groundtruth: Optional[Path] = None

    # output paths
    out: Optional[Path] = None
    out_dir: Optional[Path] = None
    out_ids: Optional[Path] = None
    out_dists: Optional[Path] = None
    jsonl: Optional[Path] = None

    # index parameters
    index_type: Literal["ivf", "composite"] = "ivf"
    d_c: Optional[int] = Field(default=None, ge=1)
    d_s: Optional[int] = Field(default=None, ge=1)
    d_q: Optional[int] = Field(default=None, ge=1)
    d_hat: Optional[int] = Field(default=None, ge=1)
    d_shortlist: Optional[int] = Field(default=None, ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    n_p: int = Field(default=1, ge=1)
    topk: int = Field(default=10, ge=1)
    bytes: Optional[int] = Field(default=None, ge=1)
    rerank_dim: int = Field(default=0, ge=0)
    shortlist: Optional[int] = Field(default=None, ge=1)
    max_iters: int = Field(default=settings.kmeans_max_iters, ge=1)
    opq_iters: int = Field(default=settings.opq_iters, ge=1)
    groundtruth_k: int = Field(default=0, ge=0)
    at: List[int] = Field(default_factory=lambda: [1, 10], description="Cutoffs k for eval metrics")

    synthetic: Optional[SyntheticMrSpec] = None
    sweep: Optional[SweepSpec] = None

    @model_validator(mode="after")
    def _check_paths_and_params(self):
        for name in _REQUIRED_INPUTS[self.subcommand]:
            if getattr(self, name) is None:
                raise ValueError(f"{self.subcommand} requires --{name.replace('_', '-')}")
        for name in _REQUIRED_OUTPUTS[self.subcommand]:
            if getattr(self, name) is None:
                raise ValueError(f"{self.subcommand} requires --{name.replace('_', '-')}")
        if self.subcommand == "gen" and self.synthetic is None:
            raise ValueError("gen requires a synthetic dataset spec (--n, --d or --config)")
        if self.subcommand == "build" and self.k is None:
            raise ValueError("build requires --k")
        if self.subcommand == "build" and self.index_type == "composite" and self.bytes is None:
            raise ValueError("composite build requires --bytes")
        if self.subcommand == "sweep" and self.sweep is None:
            raise ValueError("sweep requires a sweep spec (--config)")
        if not self.at or any(k < 1 for k in self.at):
            raise ValueError("eval cutoffs must be >= 1")
        return self

    def input_paths(self) -> List[Path]:
        """Paths this run reads; they must exist before any compute starts"""
        names = _REQUIRED_INPUTS[self.subcommand] + _OPTIONAL_INPUTS
        if self.subcommand == "build":
            names = names + ["base_labels"]
        if self.subcommand == "search":
            names = names + ["base_labels", "query_labels"]
        return [getattr(self, name) for name in names if getattr(self, name) is not None]
