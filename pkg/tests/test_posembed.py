import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pvred.errors import InvalidInputError
from pvred.posembed import embed_position, embed_positions, frequencies, offset_map


def embed_oracle(t, d):
    """Direct per-index evaluation: 1-based pair index i, cos at 2i-1, sin at 2i."""
    p = np.zeros(d)
    for i in range(1, (d + 1) // 2 + 1):
        w = 10000.0 ** (-2 * i / d)
        p[2 * i - 2] = np.cos(t * w)
        if 2 * i - 1 < d:
            p[2 * i - 1] = np.sin(t * w)
    return p


class TestEmbedPosition:
    def test_t1_d4(self):
        np.testing.assert_allclose(embed_position(1, 4), [np.cos(0.01), np.sin(0.01), np.cos(1e-4), np.sin(1e-4)])
        np.testing.assert_allclose(embed_position(1, 4), [0.99995, 0.0100, 1.0000, 0.0001], atol=1e-6)

    @given(st.integers(1, 10_000))
    def test_d2(self, t):
        # one pair, i = 1: frequency 10000 ** (-2 / 2)
        p = embed_position(t, 2)
        np.testing.assert_allclose(p, [np.cos(t / 10000), np.sin(t / 10000)])
        assert np.all(np.abs(p) <= 1)

    @pytest.mark.parametrize("d", [1, 2, 3, 5, 6, 12, 64])
    @pytest.mark.parametrize("t", [1, 7, 150])
    def test_matches_oracle(self, t, d):
        np.testing.assert_allclose(embed_position(t, d), embed_oracle(t, d), rtol=0, atol=1e-13)

    def test_odd_dimension_truncates_to_cos(self):
        p = embed_position(3, 5)
        assert p.shape == (5,)
        assert p[-1] == pytest.approx(np.cos(3 * 10000.0 ** (-6 / 5)))

    def test_batch_equals_single(self):
        table = embed_positions(np.arange(1, 11), 6)
        for t in range(1, 11):
            np.testing.assert_array_equal(table[t - 1], embed_position(t, 6))

    def test_deterministic(self):
        assert embed_position(17, 12).tobytes() == embed_position(17, 12).tobytes()

    def test_distinct(self):
        table = embed_positions(np.arange(1, 101), 6)
        dist = np.linalg.norm(table[:, None] - table[None], axis=-1)
        assert dist[~np.eye(100, dtype=bool)].min() > 0

    @pytest.mark.parametrize("t, d", [(0, 4), (-1, 4), (1, 0)])
    def test_invalid(self, t, d):
        with pytest.raises(InvalidInputError):
            embed_position(t, d)

    def test_frequencies(self):
        np.testing.assert_allclose(frequencies(4), [1e-2, 1e-4])


class TestOffsetMap:
    def test_k0_identity(self):
        np.testing.assert_array_equal(offset_map(0, 6), np.eye(6))

    def test_k1_d2_rotation(self):
        c, s = np.cos(1e-4), np.sin(1e-4)
        M = offset_map(1, 2)
        np.testing.assert_allclose(M, [[c, -s], [s, c]])
        for t in range(1, 101):
            np.testing.assert_allclose(M @ embed_position(t, 2), embed_position(t + 1, 2), atol=1e-12)

    def test_k7_d6_t3(self):
        assert np.linalg.norm(offset_map(7, 6) @ embed_position(3, 6) - embed_position(10, 6)) < 1e-9

    @pytest.mark.parametrize("d", [2, 6, 64])
    def test_linearity_sweep(self, d):
        P = embed_positions(np.arange(1, 251), d)
        worst = 0.0
        for k in range(51):
            M = offset_map(k, d)
            worst = max(worst, np.max(np.abs(P[:200] @ M.T - P[k : k + 200])))
        assert worst < 1e-9

    def test_composition(self):
        np.testing.assert_allclose(offset_map(3, 8) @ offset_map(4, 8), offset_map(7, 8), atol=1e-14)

    @pytest.mark.parametrize("d", [0, 1, 5])
    def test_invalid_dimension(self, d):
        with pytest.raises(InvalidInputError):
            offset_map(1, d)

    def test_orthogonal(self):
        for k, d in itertools.product([1, 9, 40], [2, 6]):
            M = offset_map(k, d)
            np.testing.assert_allclose(M.T @ M, np.eye(d), atol=1e-14)
