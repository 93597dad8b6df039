"""
Design-space sweep for adanns
Handles grid expansion over (d_c, d_s, k, n_p) and code budgets, per-tuple
build and evaluation, streaming CSV output with resume, and Pareto frontiers.
"""

import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from .. import __version__
from ..config import SEARCH_CONFIG, SWEEP_CONFIG, settings
from ..core.embeddings import Dataset, EmbeddingSet, normalized, rigid_proxy, truncate
from ..core.exceptions import ConfigurationError
from ..core.vecs_io import read_fvecs
from ..models.configs import CostParams, DatasetSource, KmeansConfig, SearchParams, SweepSpec
from ..models.results import FRONTIER_COLUMNS, FrontierRow, RunManifest, SearchResult
from .composite import build_composite
from .exact import exact_neighbors
from .ivf import IvfIndex
from .metrics import (
    adc_query_cost,
    build_report,
    composite_query_cost,
    ivf_query_cost,
    mean_k_recall_at_n,
    top1_accuracy,
)
from .quantization import train_opq
from .synthetic import generate_rigid_proxy, generate_synthetic_mr

IVF_FAMILIES = ("ivf", "adanns-ivf", "adanns-ivf-d", "mg-ivf-rr")

# Build-key tags; IVF families share tag 0 so equal (d_c, k) means an equal build seed
_IVF_BUILD, _OPQ_BUILD, _COMPOSITE_BUILD = 0, 1, 2

INT_COLUMNS = ["d_c", "d_s", "k", "n_p", "bytes", "rerank_dim", "build_seed"]


# Data
# ---------------------------------------------------------------------------


def load_dataset(source: DatasetSource) -> Dataset:
    """Materialize a sweep dataset from a synthetic spec or fvecs files"""
    if source.synthetic is not None:
        data = generate_synthetic_mr(source.synthetic)
    else:
        data = Dataset(
            database=read_fvecs(source.base_path, labels_path=source.base_labels_path),
            queries=read_fvecs(source.query_path, labels_path=source.query_labels_path),
        )
    if source.metric == "cosine":
        data = Dataset(normalized(data.database), normalized(data.queries))
    return data


def load_rigid_dataset(source: DatasetSource, data: Dataset) -> Dataset:
    """Data without front-loading for the rigid proxy: alpha = 0 when synthetic"""
    if source.synthetic is None:
        return data
    rigid = generate_rigid_proxy(source.synthetic)
    if source.metric == "cosine":
        rigid = Dataset(normalized(rigid.database), normalized(rigid.queries))
    return rigid


def build_seed(seed: int, key: Sequence[int]) -> int:
    """Independent RNG stream per build key"""
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


# Grid expansion
# ---------------------------------------------------------------------------


def _ladder(limit: int) -> List[int]:
    return [v for v in SWEEP_CONFIG["prefix_ladder"] if v <= limit]


def _grid(values: Optional[List[int]], limit: int, name: str) -> List[int]:
    grid = list(dict.fromkeys(values)) if values is not None else _ladder(limit)
    if not grid:
        raise ConfigurationError(f"{name} is empty for a limit of {limit}")
    return grid


def _check_dims(grid: List[int], d: int, name: str) -> None:
    too_big = [v for v in grid if v > d]
    if too_big:
        raise ConfigurationError(f"{name} values {too_big} exceed the dataset dimension {d}")


def expand_grid(spec: SweepSpec, d: int, n: int) -> List[Tuple[Tuple[int, ...], FrontierRow]]:
    """(build key, row template) for every tuple of the spec's family, in grid order"""
    d_c_grid = _grid(spec.d_c_grid, d, "d_c_grid")
    d_s_grid = _grid(spec.d_s_grid, d, "d_s_grid")
    k_grid = _grid(spec.k_grid, n, "k_grid")
    _check_dims(d_c_grid, d, "d_c_grid")
    _check_dims(d_s_grid, d, "d_s_grid")
    n_p_grid = list(dict.fromkeys(spec.n_p_grid))
    budgets = list(dict.fromkeys(spec.budgets))
    family = spec.family

    tuples: List[Tuple[Tuple[int, ...], FrontierRow]] = []
    if family in ("ivf", "mg-ivf-rr"):
        for d_c in d_c_grid:
            for k in k_grid:
                for n_p in n_p_grid:
                    row = FrontierRow(family=family, d_c=d_c, d_s=d_c, k=k, n_p=n_p)
                    tuples.append(((_IVF_BUILD, d_c, k), row))
    elif family == "adanns-ivf":
        for d_c in d_c_grid:
            for k in k_grid:
                for d_s in d_s_grid:
                    for n_p in n_p_grid:
                        row = FrontierRow(family=family, d_c=d_c, d_s=d_s, k=k, n_p=n_p)
                        tuples.append(((_IVF_BUILD, d_c, k), row))
    elif family == "adanns-ivf-d":
        for k in k_grid:
            for d_hat in d_s_grid:
                for n_p in n_p_grid:
                    row = FrontierRow(family=family, d_c=d, d_s=d_hat, k=k, n_p=n_p)
                    tuples.append(((_IVF_BUILD, d, k), row))
    elif family == "opq-exhaustive":
        for d_s in d_s_grid:
            for m in budgets:
                row = FrontierRow(family=family, d_s=d_s, bytes=m)
                tuples.append(((_OPQ_BUILD, d_s, m), row))
    elif family == "composite":
        _check_dims([spec.rerank_dim] if spec.rerank_dim else [], d, "rerank_dim")
        for d_c in d_c_grid:
            for k in k_grid:
                for d_q in d_s_grid:
                    for m in budgets:
                        for n_p in n_p_grid:
                            row = FrontierRow(
                                family=family, d_c=d_c, d_s=d_q, k=k, n_p=n_p, bytes=m, rerank_dim=spec.rerank_dim
                            )
                            tuples.append(((_COMPOSITE_BUILD, d_c, k, d_q, m), row))
    else:
        raise ConfigurationError(f"unknown index family {family!r}")
    return tuples


# Frontier tables
# ---------------------------------------------------------------------------


def rows_to_frame(rows: Sequence[FrontierRow]) -> pd.DataFrame:
    frame = pd.DataFrame([row.to_record() for row in rows], columns=FRONTIER_COLUMNS)
    for column in INT_COLUMNS:
        frame[column] = frame[column].astype("Int64")
    return frame


def read_frontier(path: Union[str, Path]) -> List[FrontierRow]:
    frame = pd.read_csv(path, float_precision="round_trip")
    frame = frame.astype(object).where(frame.notna(), None)
    return [FrontierRow(**record) for record in frame.to_dict(orient="records")]


def write_frontier(rows: Sequence[FrontierRow], path: Union[str, Path]) -> None:
    rows_to_frame(rows).to_csv(path, index=False)


def pareto_frontier(rows: Sequence[FrontierRow]) -> List[FrontierRow]:
    """
    Rows not dominated in (higher top-1, lower cost), by ascending cost.
    Rows tied on both axes are all kept; failed rows are ignored.
    """
    candidates = [row for row in rows if row.ok and row.top1 is not None and row.cost is not None]
    ordered = sorted(candidates, key=lambda row: (row.cost, -row.top1))
    frontier: List[FrontierRow] = []
    best_top1, best_cost = -np.inf, None
    for row in ordered:
        if row.top1 > best_top1:
            frontier.append(row)
            best_top1, best_cost = row.top1, row.cost
        elif row.top1 == best_top1 and row.cost == best_cost:
            frontier.append(row)
    return frontier


def frontier_dominates(a_rows: Sequence[FrontierRow], b_rows: Sequence[FrontierRow]) -> bool:
    """True when every point on b's frontier is matched by some a row at no greater cost"""
    a_front = pareto_frontier(a_rows)
    for b in pareto_frontier(b_rows):
        if not any(a.cost <= b.cost and a.top1 >= b.top1 for a in a_front):
            return False
    return True


def manifest_path(output: Union[str, Path]) -> Path:
    output = Path(output)
    return output.with_name(f"{output.stem}.manifest.json")


def write_manifest(spec: SweepSpec, path: Union[str, Path], rows: int = 0) -> None:
    manifest = RunManifest(
        tool=settings.app_name,
        version=__version__,
        seed=spec.seed,
        family=spec.family,
        columns=FRONTIER_COLUMNS,
        rows=rows,
        spec=spec.model_dump(mode="json"),
    )
    Path(path).write_text(manifest.model_dump_json(indent=2))


# Runner
# ---------------------------------------------------------------------------


@dataclass
class SweepRunner:
    """Evaluates every tuple of one sweep spec; builds are shared per build key"""

    spec: SweepSpec
    data: Dataset
    rigid: Optional[Dataset] = None
    _truth: Dict[Tuple[str, int], np.ndarray] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if not (self.data.database.has_labels and self.data.queries.has_labels):
            raise ConfigurationError("sweeps score top-1 and need labeled database and query sets")
        if self.spec.family == "mg-ivf-rr" and self.rigid is None:
            self.rigid = self.data

    @property
    def n_db(self) -> int:
        return self.data.database.n

    # ------------------------------------------------------------ helpers

    def _kcfg(self, k: int, seed: int) -> KmeansConfig:
        return KmeansConfig(k=k, seed=seed, max_iters=self.spec.max_iters)

    def _ground_truth(self, tag: str, database: EmbeddingSet, queries: EmbeddingSet, d_s: int) -> np.ndarray:
        with self._lock:
            cached = self._truth.get((tag, d_s))
        if cached is None:
            cached = exact_neighbors(database, queries, d_s, topk=1)
            with self._lock:
                self._truth[(tag, d_s)] = cached
        return cached

    def _score(
        self,
        row: FrontierRow,
        results: List[SearchResult],
        truth: np.ndarray,
        cost: float,
        seed: int,
        labels: Tuple[np.ndarray, np.ndarray],
    ) -> FrontierRow:
        report = build_report(results, query_labels=labels[0], db_labels=labels[1])
        recall = mean_k_recall_at_n([r.ids for r in results], truth, k=1, n=1)
        return row.model_copy(
            update={
                "top1": top1_accuracy(report),
                "recall_1_at_1": recall,
                "cost": float(cost),
                "build_seed": seed,
                "status": "ok",
            }
        )

    @staticmethod
    def _failed(row: FrontierRow, exc: Exception, seed: Optional[int] = None, status: str = "error") -> FrontierRow:
        return row.model_copy(
            update={"status": status, "error": f"{type(exc).__name__}: {exc}", "build_seed": seed}
        )

    # ------------------------------------------------------ family groups

    def _ivf_group(self, key: Tuple[int, ...], rows: List[FrontierRow], seed: int) -> List[FrontierRow]:
        _, d_c, k = key
        family = self.spec.family
        database, queries, tag = self.data.database, self.data.queries, "mr"
        if family == "ivf":
            build_set = truncate(database, d_c)
        elif family == "mg-ivf-rr":
            database, queries, tag = rigid_proxy(self.rigid.database, d_c), rigid_proxy(self.rigid.queries, d_c), f"rr{d_c}"
            build_set = database
        else:
            build_set = database

        index = IvfIndex.build(build_set, d_c, k, self._kcfg(k, seed))
        labels = (queries.labels, database.labels)
        out = []
        for row in rows:
            try:
                params = SearchParams(d_s=row.d_s, n_p=row.n_p, topk=self.spec.topk)
                if family == "adanns-ivf-d":
                    results = index.search_adaptive_d_batch(queries.data, row.d_s, params)
                else:
                    results = index.search_batch(queries.data, params)
                truth = self._ground_truth(tag, database, queries, row.d_s)
                cost = ivf_query_cost(CostParams(d_s=row.d_s, k=k, n_p=row.n_p, n_db=self.n_db))
                out.append(self._score(row, results, truth, cost, seed, labels))
            except Exception as exc:
                logger.error(f"Sweep tuple {row.key} failed: {exc}")
                out.append(self._failed(row, exc, seed))
        return out

    def _opq_group(self, key: Tuple[int, ...], rows: List[FrontierRow], seed: int) -> List[FrontierRow]:
        _, d_s, m = key
        if d_s % m:
            logger.warning(f"Skipping d_s={d_s}: not divisible by m={m}")
            error = ConfigurationError(f"m={m} does not divide d_s={d_s}")
            return [self._failed(row, error, seed, status="skipped") for row in rows]
        database, queries = self.data.database, self.data.queries
        view = database.prefix(d_s)
        codec = train_opq(view, m, iters=self.spec.opq_iters, kcfg=self._kcfg(256, seed))
        codes = codec.encode(view)
        truth = self._ground_truth("mr", database, queries, d_s)
        cost = adc_query_cost(d_s, m, self.n_db)
        out = []
        for row in rows:
            results = [codec.adc_search(codes, q, self.spec.topk) for q in queries.data]
            out.append(self._score(row, results, truth, cost, seed, (queries.labels, database.labels)))
        return out

    def _composite_group(self, key: Tuple[int, ...], rows: List[FrontierRow], seed: int) -> List[FrontierRow]:
        _, d_c, k, d_q, m = key
        if d_q % m:
            logger.warning(f"Skipping d_q={d_q}: not divisible by m={m}")
            error = ConfigurationError(f"m={m} does not divide d_q={d_q}")
            return [self._failed(row, error, seed, status="skipped") for row in rows]
        database, queries = self.data.database, self.data.queries
        index = build_composite(
            database,
            d_c=d_c,
            k=k,
            d_q=d_q,
            m=m,
            rerank_dim=self.spec.rerank_dim,
            kcfg=self._kcfg(k, seed),
            opq_iters=self.spec.opq_iters,
        )
        shortlist = self.spec.shortlist or SEARCH_CONFIG["shortlist_factor"] * self.spec.topk
        rerank_dim = self.spec.rerank_dim
        truth = self._ground_truth("mr", database, queries, rerank_dim or d_q)
        out = []
        for row in rows:
            try:
                params = SearchParams(d_s=d_q, n_p=row.n_p, topk=self.spec.topk)
                results = index.search_batch(queries.data, params, shortlist=shortlist)
                cost = composite_query_cost(
                    d_c, k, row.n_p, self.n_db, d_q, m,
                    shortlist=shortlist if rerank_dim else 0,
                    rerank_dim=rerank_dim,
                )
                out.append(self._score(row, results, truth, cost, seed, (queries.labels, database.labels)))
            except Exception as exc:
                logger.error(f"Sweep tuple {row.key} failed: {exc}")
                out.append(self._failed(row, exc, seed))
        return out

    def evaluate_group(self, key: Tuple[int, ...], rows: List[FrontierRow]) -> List[FrontierRow]:
        """Build once for `key`, then evaluate each row; a failed build fails every row"""
        seed = build_seed(self.spec.seed, key)
        try:
            if self.spec.family in IVF_FAMILIES:
                return self._ivf_group(key, rows, seed)
            if self.spec.family == "opq-exhaustive":
                return self._opq_group(key, rows, seed)
            return self._composite_group(key, rows, seed)
        except Exception as exc:
            logger.error(f"Sweep build {key} failed: {exc}")
            return [self._failed(row, exc, seed) for row in rows]

    # ---------------------------------------------------------------- run

    def run(self) -> List[FrontierRow]:
        spec = self.spec
        tuples = expand_grid(spec, self.data.database.d, self.n_db)
        output = Path(spec.output) if spec.output is not None else None

        done: Dict[str, FrontierRow] = {}
        if output is not None and spec.resume and output.exists():
            done = {row.key: row for row in read_frontier(output)}
            logger.info(f"Resuming sweep: {len(done)} rows already in {output}")

        groups: "OrderedDict[Tuple[int, ...], List[FrontierRow]]" = OrderedDict()
        for key, row in tuples:
            if row.key not in done:
                groups.setdefault(key, []).append(row)
        pending = sum(len(rows) for rows in groups.values())
        logger.info(f"Sweep {spec.family}: {len(tuples)} tuples, {pending} to evaluate in {len(groups)} builds")

        if output is not None and not done:
            write_frontier([], output)
        finished: Dict[str, FrontierRow] = dict(done)
        write_lock = threading.Lock()

        def record(rows: List[FrontierRow]) -> None:
            with write_lock:
                for row in rows:
                    finished[row.key] = row
                if output is not None:
                    rows_to_frame(rows).to_csv(output, mode="a", header=False, index=False)

        with tqdm(total=pending, desc=f"sweep {spec.family}", disable=not spec.progress) as bar:
            if spec.workers > 1 and len(groups) > 1:
                with ThreadPoolExecutor(max_workers=spec.workers) as pool:
                    futures = {pool.submit(self.evaluate_group, key, rows): len(rows) for key, rows in groups.items()}
                    for future in as_completed(futures):
                        record(future.result())
                        bar.update(futures[future])
            else:
                for key, rows in groups.items():
                    record(self.evaluate_group(key, rows))
                    bar.update(len(rows))

        ordered = [finished[row.key] for _, row in tuples if row.key in finished]
        if output is not None:
            write_frontier(ordered, output)
            write_manifest(spec, manifest_path(output), rows=len(ordered))
        failed = sum(1 for row in ordered if not row.ok)
        logger.info(f"Sweep {spec.family} finished: {len(ordered)} rows, {failed} not ok")
        return ordered


def run_sweep(spec: SweepSpec, data: Optional[Dataset] = None) -> List[FrontierRow]:
    """Run a sweep over `data`, or over the spec's own dataset when not given"""
    if data is None:
        data = load_dataset(spec.dataset)
    rigid = load_rigid_dataset(spec.dataset, data) if spec.family == "mg-ivf-rr" else None
    return SweepRunner(spec=spec, data=data, rigid=rigid).run()
