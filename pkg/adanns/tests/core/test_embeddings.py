"""
Tests for the embedding store
"""

import numpy as np
import pytest

from adanns.core.distances import squared_l2
from adanns.core.embeddings import (
    EmbeddingSet,
    as_matrix,
    check_prefix,
    normalized,
    prefix_view,
    rigid_proxy,
    truncate,
)
from adanns.core.exceptions import ConfigurationError, DimensionError


class TestEmbeddingSet:
    """Test cases for EmbeddingSet construction"""

    @pytest.mark.unit
    def test_defaults(self, rng):
        data = rng.standard_normal((10, 4))
        emb = EmbeddingSet(data)

        assert emb.n == 10 and emb.d == 4
        assert emb.data.dtype == np.float32
        np.testing.assert_array_equal(emb.ids, np.arange(10))
        assert not emb.has_labels

    @pytest.mark.unit
    def test_data_is_read_only_and_detached(self, rng):
        data = rng.standard_normal((5, 3)).astype(np.float32)
        emb = EmbeddingSet(data)
        data[0, 0] = 99.0

        assert emb.data[0, 0] != 99.0
        with pytest.raises(ValueError):
            emb.data[0, 0] = 1.0

    @pytest.mark.unit
    def test_label_length_mismatch(self, rng):
        with pytest.raises(ConfigurationError):
            EmbeddingSet(rng.standard_normal((5, 3)), labels=[0, 1])

    @pytest.mark.unit
    def test_rejects_non_matrix(self):
        with pytest.raises(ConfigurationError):
            EmbeddingSet(np.zeros(5))

    @pytest.mark.unit
    def test_with_labels(self, rng):
        emb = EmbeddingSet(rng.standard_normal((4, 2))).with_labels([1, 0, 1, 0])
        np.testing.assert_array_equal(emb.labels, [1, 0, 1, 0])


class TestPrefixes:
    """Test cases for prefix views and copies"""

    @pytest.mark.unit
    def test_prefix_view_shares_memory(self, rng):
        emb = EmbeddingSet(rng.standard_normal((20, 16)))
        view = emb.prefix(4)

        assert view.shape == (20, 4)
        assert np.shares_memory(view, emb.data)
        np.testing.assert_array_equal(view, emb.data[:, :4])

    @pytest.mark.unit
    @pytest.mark.parametrize("m", [0, 17, -1])
    def test_prefix_out_of_range(self, rng, m):
        emb = EmbeddingSet(rng.standard_normal((3, 16)))
        with pytest.raises(DimensionError):
            prefix_view(emb, m)

    @pytest.mark.unit
    def test_full_prefix_allowed(self, rng):
        emb = EmbeddingSet(rng.standard_normal((3, 16)))
        assert emb.prefix(16).shape == (3, 16)

    @pytest.mark.unit
    def test_check_prefix_rejects_fractions(self):
        with pytest.raises(DimensionError):
            check_prefix(2.5, 8)
        assert check_prefix(8, 8) == 8

    @pytest.mark.unit
    def test_truncate_is_contiguous_copy(self, rng):
        emb = EmbeddingSet(rng.standard_normal((20, 16)), labels=np.arange(20) % 2)
        small = truncate(emb, 8)

        assert small.d == 8
        assert small.data.flags.c_contiguous
        assert not np.shares_memory(small.data, emb.data)
        np.testing.assert_array_equal(small.data, emb.data[:, :8])
        np.testing.assert_array_equal(small.labels, emb.labels)

    @pytest.mark.unit
    def test_prefix_distances_add_up(self, rng):
        emb = EmbeddingSet(rng.standard_normal((100, 64)))
        x, y = emb.data[:10], emb.data
        full = squared_l2(x, y)
        for m in (1, 7, 16, 33, 63):
            head = squared_l2(x[:, :m], y[:, :m])
            tail = squared_l2(x[:, m:], y[:, m:])
            np.testing.assert_allclose(head + tail, full, rtol=1e-5)

    @pytest.mark.unit
    def test_prefix_distances_grow_with_width(self, rng):
        emb = EmbeddingSet(rng.standard_normal((100, 64)))
        x, y = emb.data[:10], emb.data
        by_width = np.stack([squared_l2(x[:, :m], y[:, :m]) for m in range(1, 65)])
        assert np.all(np.diff(by_width, axis=0) >= -1e-9 * by_width[1:])


class TestNormalization:
    """Test cases for row normalization and rigid proxies"""

    @pytest.mark.unit
    def test_normalized_rows(self, rng):
        data = rng.standard_normal((30, 8))
        data[3] = 0.0
        emb = normalized(EmbeddingSet(data))
        norms = np.linalg.norm(emb.data, axis=1)

        np.testing.assert_allclose(np.delete(norms, 3), 1.0, rtol=1e-6)
        assert norms[3] == 0.0

    @pytest.mark.unit
    def test_rigid_proxy(self, rng):
        emb = EmbeddingSet(rng.standard_normal((30, 8)) + 1.0)
        proxy = rigid_proxy(emb, 4)

        assert proxy.d == 4
        np.testing.assert_allclose(np.linalg.norm(proxy.data, axis=1), 1.0, rtol=1e-6)

    @pytest.mark.unit
    def test_as_matrix_promotes_vectors(self):
        assert as_matrix(np.arange(5.0)).shape == (1, 5)
        with pytest.raises(DimensionError):
            as_matrix(np.zeros((2, 2, 2)))
