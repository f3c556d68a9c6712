import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macimmse.constellation import Constellation, bpsk, by_name, cartesian_power, product, qam


def assert_invariants(c):
    assert abs(c.probs.sum() - 1) <= 1e-12
    assert np.all(c.probs >= 0)
    assert np.allclose(c.mean(), 0, atol=1e-12)
    assert np.allclose(c.covariance(), np.eye(c.dim), atol=1e-9)


class TestConstructors:
    def test_bpsk_definition(self):
        c = bpsk()
        assert sorted(c.points.ravel().real) == [-1.0, 1.0]
        np.testing.assert_array_equal(c.probs, [0.5, 0.5])
        assert c.dim == 1

    def test_qam4_points(self):
        c = qam(4)
        expected = {complex(a, b) / np.sqrt(2) for a in (1, -1) for b in (1, -1)}
        got = {complex(np.round(p, 12)) for p in c.points.ravel()}
        assert got == {complex(np.round(e, 12)) for e in expected}
        np.testing.assert_allclose(c.probs, 0.25)

    @pytest.mark.parametrize("m", [4, 16, 64])
    def test_qam_invariants(self, m):
        c = qam(m)
        assert c.size == m
        assert_invariants(c)
        assert abs(c.covariance()[0, 0] - 1) <= 1e-12

    @pytest.mark.parametrize("m", [2, 8, 9, 32, 0, -4])
    def test_qam_rejects_bad_order(self, m):
        with pytest.raises(ValueError):
            qam(m)

    def test_qam16_gray_neighbours_differ_by_one_bit(self):
        c = qam(16)
        pts = c.points.ravel()
        d_min = min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:])
        for i, a in enumerate(pts):
            for j, b in enumerate(pts):
                if i < j and abs(abs(a - b) - d_min) < 1e-9:
                    assert bin(i ^ j).count("1") == 1

    @pytest.mark.parametrize("name,size", [("bpsk", 2), ("qpsk", 4), ("qam16", 16), ("qam64", 64)])
    def test_by_name(self, name, size):
        assert by_name(name).size == size

    def test_by_name_unknown(self):
        with pytest.raises(ValueError, match="unknown"):
            by_name("8psk")

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_cartesian_power(self, n):
        c = cartesian_power(bpsk(), n)
        assert c.size == 2 ** n and c.dim == n
        assert_invariants(c)


class TestValidation:
    def test_rejects_nonzero_mean(self):
        with pytest.raises(ValueError, match="zero mean"):
            Constellation([1.0, 1.0], [0.5, 0.5])

    def test_rejects_bad_probabilities(self):
        with pytest.raises(ValueError):
            Constellation([1.0, -1.0], [0.6, 0.6])

    def test_rejects_wrong_energy(self):
        with pytest.raises(ValueError, match="covariance"):
            Constellation([2.0, -2.0], [0.5, 0.5])

    def test_non_equiprobable_is_representable(self):
        # zero mean, unit energy, unequal probabilities
        a = np.sqrt(2.0)
        c = Constellation([a, -1 / a], [1 / 3, 2 / 3])
        assert_invariants(c)


class TestProduct:
    @pytest.mark.parametrize("c1,c2,size", [(bpsk(), bpsk(), 4), (bpsk(), qam(4), 8), (qam(4), qam(16), 64)])
    def test_cardinality_and_normalisation(self, c1, c2, size):
        j = product(c1, c2)
        assert j.size == size
        assert abs(j.probs.sum() - 1) <= 1e-12

    def test_bpsk_pairs_quarter(self):
        np.testing.assert_allclose(product(bpsk(), bpsk()).probs, 0.25)

    def test_lexicographic_order(self):
        j = product(bpsk(), qam(4))
        np.testing.assert_array_equal(j.index1, np.repeat(np.arange(2), 4))
        np.testing.assert_array_equal(j.index2, np.tile(np.arange(4), 2))

    @given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=5))
    @settings(max_examples=30, deadline=None)
    def test_marginals_recover_laws(self, weights):
        # a random zero-mean unit-energy real alphabet built from random weights
        w = np.array(weights) / sum(weights)
        pts = np.linspace(-1, 1, w.size)
        pts = pts - w @ pts
        pts = pts / np.sqrt(w @ pts ** 2)
        c = Constellation(pts, w)
        j = product(c, qam(4))
        np.testing.assert_allclose(j.marginalize(1), c.probs, atol=1e-12)
        np.testing.assert_allclose(j.marginalize(2), qam(4).probs, atol=1e-12)
