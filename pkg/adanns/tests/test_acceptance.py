"""
End-to-end acceptance checks on synthetic nested embeddings
"""

import numpy as np
import pandas as pd
import pytest
from loguru import logger
from scipy.stats import ortho_group
from typer.testing import CliRunner

from adanns.core.embeddings import truncate
from adanns.core.vecs_io import read_fvecs, read_ivecs, read_labels
from adanns.main import app
from adanns.models.configs import CostParams, KmeansConfig, PqBudget, SearchParams, SweepSpec, SyntheticMrSpec
from adanns.services import metrics
from adanns.services.composite import build_composite
from adanns.services.exact import exact_search, exact_search_batch
from adanns.services.ivf import IvfIndex
from adanns.services.metrics import build_report, top1_accuracy
from adanns.services.quantization import train_adanns_opq, train_opq, train_pq
from adanns.services.sweep import frontier_dominates, pareto_frontier, run_sweep
from adanns.services.synthetic import generate_synthetic_mr

GRID = [8, 16, 32, 64]


class TestExactOracle:
    """Probing every list reproduces brute-force prefix search"""

    @pytest.mark.integration
    @pytest.mark.parametrize("d_c", GRID)
    def test_full_probe_grid(self, small_dataset, d_c):
        db, queries = small_dataset.database, small_dataset.queries
        index = IvfIndex.build(db, d_c, 16, KmeansConfig(k=16, seed=0))
        for d_s in GRID:
            params = SearchParams(d_s=d_s, n_p=16, topk=10)
            expected = exact_search_batch(db, queries.data, d_s, 10)
            for query, truth in zip(queries.data, expected):
                found = index.search(query, params)
                np.testing.assert_array_equal(found.ids, truth.ids)
                np.testing.assert_allclose(found.distances, truth.distances, rtol=1e-5)


class TestReductionEquivalence:
    """d_c = d_s on the decoupled index is the rigid index on truncated vectors"""

    @pytest.mark.integration
    @pytest.mark.parametrize("d_c", GRID)
    @pytest.mark.parametrize("k", [8, 16])
    def test_bit_identical_results(self, small_dataset, d_c, k):
        db, queries = small_dataset.database, small_dataset.queries
        cfg = KmeansConfig(k=k, seed=11)
        decoupled = IvfIndex.build(db, d_c, k, cfg)
        rigid = IvfIndex.build(truncate(db, d_c), d_c, k, cfg)
        params = SearchParams(d_s=d_c, n_p=2, topk=10)

        for query in queries.data:
            a, b = decoupled.search(query, params), rigid.search(query, params)
            np.testing.assert_array_equal(a.ids, b.ids)
            np.testing.assert_array_equal(a.distances, b.distances)


class TestCostModel:
    """Closed-form FLOP counts"""

    @pytest.mark.unit
    def test_reference_value(self):
        assert metrics.ivf_query_cost(CostParams(d_s=2048, k=1024, n_p=1, N_D=1281167)) == 4659486

    @pytest.mark.unit
    def test_linear_in_probes(self):
        costs = [metrics.ivf_query_cost(CostParams(d_s=64, k=256, n_p=n_p, N_D=100000)) for n_p in (1, 2, 3, 4)]
        np.testing.assert_allclose(np.diff(costs), 64 * 100000 / 256)


class TestQuantizationOracles:
    """ADC agreement, OPQ monotonicity and rotation gains"""

    @pytest.mark.integration
    def test_adc_over_query_grid(self, opq_codec, anisotropic_points):
        codes = opq_codec.encode(anisotropic_points)
        decoded = opq_codec.decode(codes)
        queries = np.random.default_rng(21).standard_normal((100, 32)) * 2.0
        for query in queries:
            expected = ((decoded - query) ** 2).sum(axis=1)
            np.testing.assert_allclose(opq_codec.adc_distance(query, codes), expected, rtol=1e-4, atol=1e-6)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_opq_objective_non_increasing(self, seed):
        points = np.random.default_rng(seed).standard_normal((600, 16)) * np.linspace(2.0, 0.5, 16)
        codec = train_opq(points, m=4, iters=20, kcfg=KmeansConfig(k=256, max_iters=5, seed=seed))
        history = np.asarray(codec.opq_history)
        assert len(history) == 20
        assert np.all(np.diff(history) <= 1e-6 * history[:-1])

    @pytest.mark.integration
    def test_opq_beats_pq_on_rotated_blocks(self):
        gen = np.random.default_rng(8)
        # four independent 8-dim blocks, each strongly correlated inside
        blocks = [gen.standard_normal((1000, 1)) * 3.0 + 0.3 * gen.standard_normal((1000, 8)) for _ in range(4)]
        points = np.concatenate(blocks, axis=1) @ ortho_group.rvs(32, random_state=3).T
        cfg = KmeansConfig(k=256, max_iters=8, seed=0)

        pq = train_pq(points, m=4, kcfg=cfg)
        opq = train_opq(points, m=4, iters=6, kcfg=cfg)
        assert np.mean(opq.reconstruction_error(points)) < np.mean(pq.reconstruction_error(points))


@pytest.mark.slow
@pytest.mark.performance
class TestFrontierDominance:
    """Decoupled (d_c, d_s) sweeps against the rigid d_c = d_s sweep"""

    @pytest.fixture(scope="class")
    def frontiers(self):
        source = {
            "synthetic": {
                "n": 20000, "d": 256, "num_classes": 10, "n_queries": 500,
                "variance_decay": 0.5, "class_sep": 30.0, "seed": 0,
            }
        }
        common = dict(
            dataset=source, d_c_grid=[8, 32, 128, 256], k_grid=[16, 64], n_p_grid=[1],
            max_iters=10, progress=False, workers=4,
        )
        data = generate_synthetic_mr(SyntheticMrSpec(**source["synthetic"]))
        rigid = run_sweep(SweepSpec(family="ivf", **common), data=data)
        adaptive = run_sweep(SweepSpec(family="adanns-ivf", d_s_grid=[2, 8, 32, 128, 256], **common), data=data)
        return rigid, adaptive

    def test_weak_dominance(self, frontiers):
        rigid, adaptive = frontiers
        assert all(row.ok for row in rigid + adaptive)
        assert frontier_dominates(adaptive, rigid)

    def test_cheaper_config_matches_best_rigid(self, frontiers):
        rigid, adaptive = frontiers
        best = max(pareto_frontier(rigid), key=lambda row: (row.top1, -row.cost))
        cheap = [row for row in adaptive if row.cost <= best.cost / 2]
        assert cheap
        assert max(row.top1 for row in cheap) >= best.top1 - 0.005


@pytest.mark.slow
class TestAdannsOpqBudget:
    """A fixed code budget is best spent on a shorter prefix"""

    def test_best_prefix_is_shorter_than_full(self):
        data = generate_synthetic_mr(
            SyntheticMrSpec(n=3000, d=256, num_classes=10, n_queries=300, variance_decay=1.0, class_sep=30.0, seed=1)
        )
        budget = PqBudget(bytes=16, candidate_dims=[16, 32, 64, 128, 256])
        codec, report = train_adanns_opq(
            data.database, budget, data.queries, kcfg=KmeansConfig(k=256, max_iters=5, seed=0), opq_iters=3
        )
        accuracy = report.accuracy()

        assert report.best_d_s < 256
        assert accuracy[report.best_d_s] >= accuracy[256]
        assert codec.d_q == report.best_d_s


class TestCompositeRerank:
    """Shortlist re-ranking contract"""

    @pytest.fixture(scope="class")
    def separated(self):
        return generate_synthetic_mr(
            SyntheticMrSpec(n=3000, d=64, num_classes=10, n_queries=200, variance_decay=1.0, class_sep=30.0, seed=4)
        )

    @pytest.fixture(scope="class")
    def composite(self, separated):
        return build_composite(
            separated.database, d_c=16, k=16, d_q=32, m=8, rerank_dim=64,
            kcfg=KmeansConfig(k=16, max_iters=8, seed=0), opq_iters=3,
        )

    @pytest.mark.integration
    def test_full_shortlist_is_exact(self, separated, composite):
        params = SearchParams(d_s=64, n_p=16, topk=10)
        for query in separated.queries.data[:50]:
            found = composite.search(query, params, shortlist=separated.database.n)
            expected = exact_search(separated.database, query, 64, 10)
            np.testing.assert_array_equal(found.ids, expected.ids)
            np.testing.assert_array_equal(found.distances, expected.distances)

    @pytest.mark.integration
    def test_top1_non_decreasing_in_shortlist(self, separated, composite):
        params = SearchParams(d_s=64, n_p=16, topk=1)
        scores = []
        for shortlist in (10, 50, 100, 500):
            results = composite.search_batch(separated.queries.data, params, shortlist=shortlist)
            report = build_report(results, separated.queries.labels, separated.database.labels)
            scores.append(top1_accuracy(report))
        assert all(a <= b for a, b in zip(scores, scores[1:]))

    @pytest.mark.slow
    def test_short_prefix_codes_match_rigid_at_half_the_bytes(self, separated, composite):
        kcfg = KmeansConfig(k=16, max_iters=8, seed=0)
        rigid = build_composite(separated.database, d_c=64, k=16, d_q=64, m=16, kcfg=kcfg, opq_iters=3)
        params = SearchParams(d_s=64, n_p=2, topk=1)

        def accuracy(index):
            results = index.search_batch(separated.queries.data, params)
            return top1_accuracy(build_report(results, separated.queries.labels, separated.database.labels))

        assert composite.codec.m <= rigid.codec.m // 2
        assert accuracy(composite) >= accuracy(rigid) - 0.005


class TestMetricInvariants:
    """Randomized range and isometry checks"""

    @pytest.mark.unit
    def test_tv_distance_range_and_symmetry(self):
        gen = np.random.default_rng(13)
        for _ in range(50):
            p, q = gen.random(12), gen.random(12)
            value = metrics.tv_distance(p, q)
            assert 0.0 <= value <= 1.0
            assert value == pytest.approx(metrics.tv_distance(q, p))
            assert metrics.tv_distance(p, p) == 0.0

    @pytest.mark.unit
    def test_relative_contrast_isometry(self):
        gen = np.random.default_rng(17)
        for trial in range(50):
            db, queries = gen.standard_normal((60, 6)), gen.standard_normal((5, 6))
            rotation = ortho_group.rvs(6, random_state=trial)
            shift = gen.standard_normal(6)

            plain = metrics.relative_contrast(db, queries).value
            moved = metrics.relative_contrast(db @ rotation.T + shift, queries @ rotation.T + shift).value
            assert plain >= 1.0
            assert moved == pytest.approx(plain, rel=1e-9)


@pytest.mark.slow
@pytest.mark.cli
class TestCliPipeline:
    """gen -> build -> search -> eval reproduces brute-force top-1"""

    def test_degenerate_pipeline(self, tmp_path):
        runner = CliRunner()
        data_dir = tmp_path / "data"

        def invoke(*args):
            result = runner.invoke(app, [str(a) for a in args])
            assert result.exit_code == 0, result.output
            return result

        try:
            invoke("gen", "--out-dir", data_dir, "--n", 5000, "--d", 64, "--classes", 10, "--queries", 200, "--seed", 0)
            base = data_dir / "base.fvecs"
            invoke("build", "--base", base, "--out", tmp_path / "ivf.bin", "--k", 16)
            invoke(
                "search", "--index", tmp_path / "ivf.bin", "--base", base, "--queries", data_dir / "queries.fvecs",
                "--out-ids", tmp_path / "ids.ivecs", "--nprobe", 16, "--topk", 10,
            )
            invoke(
                "eval", "--results", tmp_path / "ids.ivecs", "--query-labels", data_dir / "query_labels.ivecs",
                "--base-labels", data_dir / "base_labels.ivecs", "--out", tmp_path / "metrics.csv",
            )
        finally:
            logger.remove()

        db = read_fvecs(base, labels_path=data_dir / "base_labels.ivecs")
        queries = read_fvecs(data_dir / "queries.fvecs", labels_path=data_dir / "query_labels.ivecs")
        brute = build_report(exact_search_batch(db, queries.data, 64, 10), queries.labels, db.labels)

        values = dict(pd.read_csv(tmp_path / "metrics.csv").itertuples(index=False))
        assert values["top1"] == pytest.approx(top1_accuracy(brute))
        retrieved = read_ivecs(tmp_path / "ids.ivecs")
        np.testing.assert_array_equal(retrieved[:, 0], [r.ids[0] for r in exact_search_batch(db, queries.data, 64, 1)])
        assert read_labels(data_dir / "query_labels.ivecs").shape == (200,)
