"""
Command-line application for adanns
Subcommands: gen, build, search, eval, sweep
"""

import functools
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import typer
import yaml
from loguru import logger
from pydantic import ValidationError

from .config import get_settings, settings
from .core.embeddings import EmbeddingSet, normalized
from .core.exceptions import AdannsError, ConfigurationError, FormatError
from .core.logging import setup_logging, verbosity_to_level
from .core.vecs_io import read_fvecs, read_ivecs, read_labels, write_fvecs, write_ivecs, write_labels
from .models.configs import KmeansConfig, RunConfig, SearchParams, build_model
from .models.results import ErrorLine
from .services.composite import COMPOSITE_MAGIC, CompositeIndex, build_composite
from .services.exact import exact_neighbors
from .services.ivf import IVF_MAGIC, IvfIndex, result_distances, result_ids
from .services.metrics import build_report, mean_k_recall_at_n
from .services.sweep import manifest_path, run_sweep
from .services.synthetic import generate_synthetic_mr

app = typer.Typer(
    name=settings.app_name,
    help="Adaptive-representation ANN search: build, search and evaluate prefix-dimension indices.",
    add_completion=False,
    no_args_is_help=True,
)


# Error handling
# ---------------------------------------------------------------------------


def _fail(exc: BaseException, exit_code: int) -> None:
    line = ErrorLine(error=type(exc).__name__, detail=str(exc), exit_code=exit_code)
    typer.echo(line.model_dump_json(), err=True)
    raise typer.Exit(code=exit_code)


def cli_errors(func):
    """Map toolkit exceptions onto exit codes and a JSON error line on stderr"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except typer.Exit:
            raise
        except (ConfigurationError, ValidationError) as exc:
            _fail(exc, 2)
        except AdannsError as exc:
            _fail(exc, exc.exit_code)
        except OSError as exc:
            _fail(exc, 3)
        except Exception as exc:
            logger.opt(exception=exc).debug("Unhandled error")
            _fail(exc, 4)

    return wrapper


# Configuration
# ---------------------------------------------------------------------------


def load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    """Key-value YAML mapping onto RunConfig fields"""
    if path is None:
        return {}
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a key-value mapping")
    return data


def _drop_unset(values: Dict[str, Any]) -> Dict[str, Any]:
    return {key: value for key, value in values.items() if value is not None}


def resolve_run_config(
    subcommand: str,
    flags: Dict[str, Any],
    config_path: Optional[Path] = None,
    nested: Optional[Dict[str, Dict[str, Any]]] = None,
) -> RunConfig:
    """
    Merge settings by precedence: flag > config file > ADANNS_* environment > default.
    `nested` carries flag overrides for the synthetic and sweep sub-mappings.
    """
    env = get_settings()
    merged: Dict[str, Any] = {"seed": env.seed, "workers": env.workers}
    merged.update(load_config_file(config_path))
    merged.update(_drop_unset(flags))
    merged["subcommand"] = subcommand

    for name, overrides in (nested or {}).items():
        section = dict(merged.get(name) or {})
        section.update(_drop_unset(overrides))
        if section:
            section.setdefault("seed", merged["seed"])
            if name == "sweep":
                section.setdefault("workers", merged["workers"])
            merged[name] = section

    config = build_model(RunConfig, merged)
    missing = [str(path) for path in config.input_paths() if not Path(path).exists()]
    if missing:
        raise FileNotFoundError(f"input file not found: {', '.join(missing)}")
    setup_logging(verbosity_to_level(config.verbosity, settings.log_level))
    logger.debug(f"Resolved {subcommand} config: {config.model_dump(exclude_none=True)}")
    return config


def _load_set(path: Path, labels: Optional[Path], metric: str, name: str) -> EmbeddingSet:
    embeddings = read_fvecs(path, labels_path=labels, name=name)
    return normalized(embeddings) if metric == "cosine" else embeddings


def load_index(path: Path, source: EmbeddingSet):
    """IVF or composite index, chosen by the file's magic tag"""
    buffer = Path(path).read_bytes()
    tag = buffer[:4]
    if tag == IVF_MAGIC:
        return IvfIndex.from_bytes(buffer, source, path=str(path))
    if tag == COMPOSITE_MAGIC:
        return CompositeIndex.from_bytes(buffer, source, path=str(path))
    raise FormatError(f"unknown index magic tag {tag!r}", offset=0, path=str(path))


# Commands
# ---------------------------------------------------------------------------


@app.command()
@cli_errors
def gen(
    out_dir: Path = typer.Option(None, "--out-dir", help="Directory for the generated files"),
    n: Optional[int] = typer.Option(None, "--n", help="Database size"),
    d: Optional[int] = typer.Option(None, "--d", help="Full dimensionality"),
    classes: Optional[int] = typer.Option(None, "--classes", help="Number of classes"),
    queries: Optional[int] = typer.Option(None, "--queries", help="Number of queries (default n // 10)"),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Variance decay exponent"),
    class_sep: Optional[float] = typer.Option(None, "--class-sep", help="Expected distance between class means"),
    groundtruth_k: Optional[int] = typer.Option(None, "--groundtruth-k", help="Also write exact top-k ids"),
    seed: Optional[int] = typer.Option(None, "--seed", help="RNG seed (falls back to ADANNS_SEED)"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML config file"),
    verbose: int = typer.Option(0, "--verbose", "-v", count=True),
):
    """Generate a labeled synthetic nested-embedding dataset as fvecs/ivecs"""
    run = resolve_run_config(
        "gen",
        {"out_dir": out_dir, "seed": seed, "groundtruth_k": groundtruth_k, "verbosity": verbose},
        config,
        nested={
            "synthetic": {
                "n": n, "d": d, "num_classes": classes, "n_queries": queries,
                "variance_decay": alpha, "class_sep": class_sep, "seed": seed,
            }
        },
    )
    data = generate_synthetic_mr(run.synthetic)
    run.out_dir.mkdir(parents=True, exist_ok=True)
    write_fvecs(data.database, run.out_dir / "base.fvecs")
    write_labels(data.database.labels, run.out_dir / "base_labels.ivecs")
    write_fvecs(data.queries, run.out_dir / "queries.fvecs")
    write_labels(data.queries.labels, run.out_dir / "query_labels.ivecs")
    if run.groundtruth_k > 0:
        truth = exact_neighbors(data.database, data.queries, data.database.d, min(run.groundtruth_k, data.database.n))
        write_ivecs(truth, run.out_dir / "groundtruth.ivecs")
    logger.info(f"Wrote synthetic dataset to {run.out_dir}")


@app.command()
@cli_errors
def build(
    base: Path = typer.Option(None, "--base", help="Database fvecs"),
    out: Path = typer.Option(None, "--out", help="Index file to write"),
    index_type: Optional[str] = typer.Option(None, "--index-type", help="ivf | composite"),
    d_c: Optional[int] = typer.Option(None, "--dc", help="Clustering prefix dimension (default full d)"),
    k: Optional[int] = typer.Option(None, "--k", help="Number of clusters"),
    d_q: Optional[int] = typer.Option(None, "--dq", help="Quantized prefix dimension (composite; default d_c)"),
    n_bytes: Optional[int] = typer.Option(None, "--bytes", help="Code bytes per vector (composite)"),
    rerank_dim: Optional[int] = typer.Option(None, "--rerank-dim", help="Re-ranking prefix dimension, 0 = off"),
    max_iters: Optional[int] = typer.Option(None, "--max-iters", help="k-means iteration cap"),
    opq_iters: Optional[int] = typer.Option(None, "--opq-iters", help="OPQ alternations"),
    metric: Optional[str] = typer.Option(None, "--metric", help="l2 | cosine"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    workers: Optional[int] = typer.Option(None, "--workers"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML config file"),
    verbose: int = typer.Option(0, "--verbose", "-v", count=True),
):
    """Build and serialize an IVF or composite index"""
    run = resolve_run_config(
        "build",
        {
            "base": base, "out": out, "index_type": index_type, "d_c": d_c, "k": k, "d_q": d_q,
            "bytes": n_bytes, "rerank_dim": rerank_dim, "max_iters": max_iters, "opq_iters": opq_iters,
            "metric": metric, "seed": seed, "workers": workers, "verbosity": verbose,
        },
        config,
    )
    source = _load_set(run.base, None, run.metric, "base")
    cluster_dim = run.d_c or source.d
    kcfg = KmeansConfig(k=run.k, seed=run.seed, max_iters=run.max_iters, workers=run.workers)
    if run.index_type == "ivf":
        index = IvfIndex.build(source, cluster_dim, run.k, kcfg)
    else:
        index = build_composite(
            source,
            d_c=cluster_dim,
            k=run.k,
            d_q=run.d_q or cluster_dim,
            m=run.bytes,
            rerank_dim=run.rerank_dim,
            kcfg=kcfg,
            opq_iters=run.opq_iters,
        )
    index.save(run.out)


@app.command()
@cli_errors
def search(
    index: Path = typer.Option(None, "--index", help="Index file"),
    base: Path = typer.Option(None, "--base", help="Database fvecs the index was built on"),
    queries: Path = typer.Option(None, "--queries", help="Query fvecs"),
    out_ids: Path = typer.Option(None, "--out-ids", help="Ranked ids (ivecs)"),
    out_dists: Optional[Path] = typer.Option(None, "--out-dists", help="Ranked squared distances (fvecs)"),
    d_s: Optional[int] = typer.Option(None, "--ds", help="Scan prefix dimension (default d_c)"),
    n_p: Optional[int] = typer.Option(None, "--nprobe", help="Clusters to probe"),
    topk: Optional[int] = typer.Option(None, "--topk", help="Neighbors per query"),
    d_hat: Optional[int] = typer.Option(None, "--d-hat", help="Inference-time prefix on a full-d index"),
    d_shortlist: Optional[int] = typer.Option(None, "--d-shortlist", help="Probe-selection prefix (<= d_c)"),
    shortlist: Optional[int] = typer.Option(None, "--shortlist", help="ADC shortlist size (composite)"),
    metric: Optional[str] = typer.Option(None, "--metric", help="l2 | cosine"),
    workers: Optional[int] = typer.Option(None, "--workers"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML config file"),
    verbose: int = typer.Option(0, "--verbose", "-v", count=True),
):
    """Search a serialized index and write ranked ids and distances"""
    run = resolve_run_config(
        "search",
        {
            "index": index, "base": base, "queries": queries, "out_ids": out_ids, "out_dists": out_dists,
            "d_s": d_s, "n_p": n_p, "topk": topk, "d_hat": d_hat, "d_shortlist": d_shortlist,
            "shortlist": shortlist, "metric": metric, "workers": workers, "verbosity": verbose,
        },
        config,
    )
    source = _load_set(run.base, None, run.metric, "base")
    query_set = _load_set(run.queries, None, run.metric, "queries")
    loaded = load_index(run.index, source)
    params = SearchParams(d_s=run.d_s or loaded.d_c, n_p=run.n_p, topk=run.topk, d_shortlist=run.d_shortlist)

    if isinstance(loaded, CompositeIndex):
        if run.d_hat is not None:
            raise ConfigurationError("--d-hat applies to IVF indices only")
        one = functools.partial(loaded.search, params=params, shortlist=run.shortlist)
    elif run.d_hat is not None:
        one = functools.partial(loaded.search_adaptive_d, d_hat=run.d_hat, params=params)
    else:
        one = functools.partial(loaded.search, params=params)

    with ThreadPoolExecutor(max_workers=run.workers) as pool:
        results = list(pool.map(one, query_set.data))

    underfilled = sum(1 for r in results if r.underfilled)
    if underfilled:
        logger.warning(f"{underfilled} queries returned fewer than {run.topk} neighbors")
    ids = result_ids(results, run.topk)
    external = np.where(ids >= 0, source.ids[np.clip(ids, 0, None)], -1)
    write_ivecs(external, run.out_ids)
    if run.out_dists is not None:
        write_fvecs(result_distances(results, run.topk), run.out_dists)
    logger.info(f"Searched {query_set.n} queries; results in {run.out_ids}")


@app.command(name="eval")
@cli_errors
def evaluate(
    results: Path = typer.Option(None, "--results", help="Ranked ids (ivecs) from search"),
    query_labels: Path = typer.Option(None, "--query-labels", help="Query labels (ivecs, d=1)"),
    base_labels: Path = typer.Option(None, "--base-labels", help="Database labels (ivecs, d=1)"),
    out: Path = typer.Option(None, "--out", help="Metric CSV to write"),
    groundtruth: Optional[Path] = typer.Option(None, "--groundtruth", help="Exact neighbor ids (ivecs)"),
    jsonl: Optional[Path] = typer.Option(None, "--jsonl", help="Per-query JSON lines to write"),
    at: Optional[List[int]] = typer.Option(None, "--at", help="Metric cutoff k (repeatable)"),
    config: Optional[Path] = typer.Option(None, "--config", help="YAML config file"),
    verbose: int = typer.Option(0, "--verbose", "-v", count=True),
):
    """Score ranked results against labels (and optional ground truth)"""
    run = resolve_run_config(
        "eval",
        {
            "results": results, "query_labels": query_labels, "base_labels": base_labels, "out": out,
            "groundtruth": groundtruth, "jsonl": jsonl, "at": at or None, "verbosity": verbose,
        },
        config,
    )
    retrieved = read_ivecs(run.results).astype(np.int64)
    report = build_report(list(retrieved), read_labels(run.query_labels), read_labels(run.base_labels))
    values = report.summary(run.at)

    if run.groundtruth is not None:
        truth = read_ivecs(run.groundtruth).astype(np.int64)
        depth = retrieved.shape[1]
        values["1-recall@1"] = mean_k_recall_at_n(list(retrieved), list(truth), k=1, n=1)
        for k in sorted({1, min(10, truth.shape[1])}):
            values[f"{k}-recall@{depth}"] = mean_k_recall_at_n(list(retrieved), list(truth), k=k, n=depth)
        report.metrics.update(values)

    report.to_csv(run.out)
    if run.jsonl is not None:
        report.to_jsonl(run.jsonl)
    for name, value in values.items():
        typer.echo(f"{name}\t{value:.6f}")


@app.command()
@cli_errors
def sweep(
    config: Path = typer.Option(None, "--config", help="YAML file with a `sweep` mapping"),
    out: Optional[Path] = typer.Option(None, "--out", help="Frontier CSV to write"),
    resume: Optional[bool] = typer.Option(None, "--resume/--no-resume", help="Skip tuples already in --out"),
    progress: Optional[bool] = typer.Option(None, "--progress/--no-progress"),
    seed: Optional[int] = typer.Option(None, "--seed"),
    workers: Optional[int] = typer.Option(None, "--workers"),
    verbose: int = typer.Option(0, "--verbose", "-v", count=True),
):
    """Run a design-space sweep and write the frontier CSV plus a run manifest"""
    run = resolve_run_config(
        "sweep",
        {"out": out, "seed": seed, "workers": workers, "verbosity": verbose},
        config,
        nested={"sweep": {"output": out, "resume": resume, "progress": progress, "seed": seed, "workers": workers}},
    )
    spec = run.sweep
    if spec.output is None:
        spec = spec.model_copy(update={"output": run.out})
    rows = run_sweep(spec)
    ok = sum(1 for row in rows if row.ok)
    typer.echo(f"{ok}/{len(rows)} rows ok; frontier in {spec.output}, manifest in {manifest_path(spec.output)}")


def main() -> None:
    app()


if __name__ == "__main__":
    main()
