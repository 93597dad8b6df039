"""
Tests for PQ / OPQ codecs, ADC and the fixed-budget prefix search
"""

import numpy as np
import pytest
from scipy.stats import ortho_group

from adanns.core.binary import ByteWriter
from adanns.core.embeddings import EmbeddingSet
from adanns.core.exceptions import ConfigurationError, DimensionError, FormatError, MetricError
from adanns.models.configs import KmeansConfig, PqBudget
from adanns.services import quantization
from adanns.services.quantization import (
    CODEBOOK_SIZE,
    PQ_MAGIC,
    PqCodec,
    train_adanns_opq,
    train_opq,
    train_pq,
)

FAST = KmeansConfig(k=256, max_iters=5, seed=0)


class TestPqTraining:
    """Test cases for plain product quantization"""

    @pytest.mark.unit
    def test_codec_shape(self, pq_codec):
        assert pq_codec.codebooks.shape == (8, CODEBOOK_SIZE, 4)
        assert pq_codec.code_bytes == 8 and pq_codec.b == 8
        assert not pq_codec.is_opq

    @pytest.mark.unit
    def test_few_points_are_stored_exactly(self, rng):
        points = rng.standard_normal((100, 8)).astype(np.float32)
        codec = train_pq(points, m=4, kcfg=KmeansConfig(k=256, seed=0))
        np.testing.assert_array_equal(codec.reconstruction_error(points), 0.0)
        np.testing.assert_array_equal(codec.decode(codec.encode(points)), points.astype(np.float64))

    @pytest.mark.unit
    def test_single_subspace(self, rng):
        points = rng.standard_normal((300, 4))
        codec = train_pq(points, m=1, kcfg=FAST)
        assert codec.dsub == 4
        assert codec.encode(points).shape == (300, 1)

    @pytest.mark.unit
    def test_indivisible_dimension(self, rng):
        with pytest.raises(ConfigurationError):
            train_pq(rng.standard_normal((50, 10)), m=3)
        with pytest.raises(ConfigurationError):
            train_opq(rng.standard_normal((50, 10)), m=4)

    @pytest.mark.unit
    def test_objective_matches_reconstruction_error(self, pq_codec, anisotropic_points):
        errors = pq_codec.reconstruction_error(anisotropic_points)
        assert errors.sum() == pytest.approx(sum(pq_codec.subspace_objectives), rel=1e-6)

    @pytest.mark.unit
    def test_codes_are_uint8(self, pq_codec, anisotropic_points):
        codes = quantization.encode(pq_codec, anisotropic_points)
        assert codes.dtype == np.uint8 and codes.shape == (1000, 8)

    @pytest.mark.unit
    def test_encode_wrong_dimension(self, pq_codec):
        with pytest.raises(DimensionError):
            pq_codec.encode(np.zeros((2, 16)))

    @pytest.mark.unit
    def test_codebook_shape_checked(self):
        with pytest.raises(DimensionError):
            PqCodec(d_q=8, m=2, codebooks=np.zeros((2, 16, 4)))


class TestAdc:
    """Asymmetric distance computation"""

    @pytest.mark.unit
    @pytest.mark.parametrize("codec_name", ["pq_codec", "opq_codec"])
    def test_adc_equals_distance_to_decoded(self, request, codec_name, anisotropic_points, rng):
        codec = request.getfixturevalue(codec_name)
        codes = codec.encode(anisotropic_points[:200])
        decoded = codec.decode(codes)
        query = rng.standard_normal(32) * 2.0

        expected = ((decoded - query) ** 2).sum(axis=1)
        np.testing.assert_allclose(codec.adc_distance(query, codes), expected, rtol=1e-4, atol=1e-6)

    @pytest.mark.unit
    def test_table_shape(self, opq_codec, rng):
        tables = quantization.adc_tables(opq_codec, rng.standard_normal(32))
        assert tables.shape == (8, CODEBOOK_SIZE)
        assert np.all(tables >= 0)

    @pytest.mark.unit
    def test_decoded_vector_has_zero_distance(self, pq_codec, anisotropic_points):
        codes = pq_codec.encode(anisotropic_points[:10])
        query = pq_codec.decode(codes[3])[0]
        assert pq_codec.adc_distance(query, codes)[3] == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.unit
    def test_query_may_be_longer_than_codec(self, pq_codec, anisotropic_points, rng):
        codes = pq_codec.encode(anisotropic_points[:20])
        query = rng.standard_normal(32)
        long_query = np.concatenate([query, rng.standard_normal(32)])
        np.testing.assert_array_equal(pq_codec.adc_distance(long_query, codes), pq_codec.adc_distance(query, codes))
        with pytest.raises(DimensionError):
            pq_codec.adc_tables(query[:16])

    @pytest.mark.unit
    def test_adc_search_ranks_and_maps_ids(self, pq_codec, anisotropic_points):
        codes = pq_codec.encode(anisotropic_points)
        query = anisotropic_points[5]
        result = quantization.adc_search(pq_codec, codes, query, topk=10)
        dists = pq_codec.adc_distance(query, codes)

        assert len(result) == 10
        assert np.all(np.diff(result.distances) >= 0)
        assert result.distances[0] == dists.min()

        ids = np.arange(1000) + 5000
        mapped = pq_codec.adc_search(codes, query, topk=10, ids=ids)
        np.testing.assert_array_equal(mapped.ids, result.ids + 5000)

    @pytest.mark.unit
    def test_adc_search_underfills(self, pq_codec, anisotropic_points):
        codes = pq_codec.encode(anisotropic_points[:3])
        result = pq_codec.adc_search(codes, anisotropic_points[0], topk=5)
        assert result.underfilled and len(result) == 3


class TestOpq:
    """Test cases for the learned rotation"""

    @pytest.mark.unit
    def test_rotation_is_orthonormal(self, opq_codec):
        rotation = opq_codec.rotation
        assert opq_codec.is_opq
        np.testing.assert_allclose(rotation @ rotation.T, np.eye(32), atol=1e-8)

    @pytest.mark.unit
    def test_history_non_increasing(self, opq_codec):
        history = np.asarray(opq_codec.opq_history)
        assert len(history) == 4
        assert np.all(np.diff(history) <= 1e-6 * history[:-1])

    @pytest.mark.unit
    def test_single_iteration_is_pq(self, anisotropic_points):
        pq = train_pq(anisotropic_points, m=8, kcfg=FAST)
        opq = train_opq(anisotropic_points, m=8, iters=1, kcfg=FAST)
        np.testing.assert_array_equal(opq.codebooks, pq.codebooks)
        np.testing.assert_array_equal(opq.rotation, np.eye(32))

    @pytest.mark.unit
    def test_rotation_helps_on_mixed_coordinates(self, anisotropic_points):
        mixed = anisotropic_points @ ortho_group.rvs(32, random_state=11).T
        pq = train_pq(mixed, m=8, kcfg=FAST)
        opq = train_opq(mixed, m=8, iters=4, kcfg=FAST)

        assert opq.opq_history[0] == pytest.approx(sum(pq.subspace_objectives))
        assert np.mean(opq.reconstruction_error(mixed)) < np.mean(pq.reconstruction_error(mixed))

    @pytest.mark.unit
    def test_needs_one_iteration(self, anisotropic_points):
        with pytest.raises(ConfigurationError):
            train_opq(anisotropic_points, m=8, iters=0)


class TestCodecSerialization:
    """Byte round trips of codecs"""

    @pytest.mark.serialization
    @pytest.mark.parametrize("codec_name", ["pq_codec", "opq_codec"])
    def test_round_trip(self, request, codec_name, anisotropic_points, artifact_dir):
        codec = request.getfixturevalue(codec_name)
        path = artifact_dir / "codec.bin"
        codec.save(path)
        loaded = PqCodec.load(path)

        assert loaded.to_bytes() == codec.to_bytes()
        assert loaded.is_opq == codec.is_opq
        np.testing.assert_array_equal(loaded.encode(anisotropic_points[:50]), codec.encode(anisotropic_points[:50]))

    @pytest.mark.serialization
    def test_invalid_header(self):
        buffer = ByteWriter().magic(PQ_MAGIC).u32(1).u32(10).u32(3).u8(8).u8(0).getvalue()
        with pytest.raises(FormatError):
            PqCodec.from_bytes(buffer)

    @pytest.mark.serialization
    def test_truncated_codebooks(self, pq_codec):
        with pytest.raises(FormatError):
            PqCodec.from_bytes(pq_codec.to_bytes()[:-4])


class TestAdannsOpq:
    """Fixed-budget search over prefix dimensions"""

    @pytest.mark.unit
    def test_picks_best_candidate(self, tiny_dataset):
        budget = PqBudget(bytes=4, candidate_dims=[32, 8, 6, 16, 8])
        codec, report = train_adanns_opq(
            tiny_dataset.database, budget, tiny_dataset.queries, kcfg=FAST, opq_iters=2
        )

        frame = report.to_frame()
        assert list(frame["d_s"]) == [6, 8, 16, 32]
        assert list(frame["status"]) == ["skipped", "ok", "ok", "ok"]

        accuracy = report.accuracy()
        best = max(accuracy.values())
        assert report.best_d_s == min(d for d, top1 in accuracy.items() if top1 == best)
        assert codec.d_q == report.best_d_s and codec.m == 4
        assert report.bytes == 4

    @pytest.mark.unit
    def test_empty_candidates(self, tiny_dataset):
        with pytest.raises(ConfigurationError):
            train_adanns_opq(tiny_dataset.database, PqBudget(bytes=4), tiny_dataset.queries)

    @pytest.mark.unit
    def test_candidate_too_large(self, tiny_dataset):
        with pytest.raises(DimensionError):
            train_adanns_opq(tiny_dataset.database, PqBudget(bytes=4, candidate_dims=[64]), tiny_dataset.queries)

    @pytest.mark.unit
    def test_no_divisible_candidate(self, tiny_dataset):
        with pytest.raises(ConfigurationError):
            train_adanns_opq(tiny_dataset.database, PqBudget(bytes=5, candidate_dims=[8, 16]), tiny_dataset.queries)

    @pytest.mark.unit
    def test_needs_labels(self, tiny_dataset):
        unlabeled = EmbeddingSet(tiny_dataset.queries.data)
        with pytest.raises(MetricError):
            train_adanns_opq(tiny_dataset.database, PqBudget(bytes=4, candidate_dims=[8]), unlabeled)

    @pytest.mark.unit
    def test_empty_query_set(self, tiny_dataset, pq_codec, anisotropic_points):
        empty = EmbeddingSet(np.empty((0, 32), dtype=np.float32), labels=np.empty(0, dtype=np.int64))
        with pytest.raises(MetricError):
            train_adanns_opq(tiny_dataset.database, PqBudget(bytes=4, candidate_dims=[8]), empty)

        codes = pq_codec.encode(anisotropic_points)
        with pytest.raises(MetricError):
            quantization.opq_top1(pq_codec, codes, np.zeros(codes.shape[0], dtype=np.int64), empty)
