import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dense_toeplitz, proj_dist, top_abs_eigvecs
from wpca.estimators import sym_eig_topr
from wpca.exceptions import ParameterError, ValidationError
from wpca.weights import (
    ToeplitzWeights,
    WeightGrid,
    build_grid,
    grid_from_gammas,
    lag_grams,
    mu_gamma,
    toeplitz_apply,
    weighted_gram,
)

simplex = st.lists(st.floats(0, 1), min_size=1, max_size=4).filter(lambda v: sum(v) > 1e-3)


class TestToeplitzWeights:
    def test_rejects_negative_and_unnormalized(self):
        with pytest.raises(ValidationError):
            ToeplitzWeights(np.array([1.2, -0.2]))
        with pytest.raises(ValidationError):
            ToeplitzWeights(np.array([0.5, 0.4]))

    def test_gamma_is_read_only(self):
        w = ToeplitzWeights(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            w.gamma[0] = 1.0

    def test_lag_and_identity(self):
        assert ToeplitzWeights.lag(2).gamma.tolist() == [0.0, 0.0, 1.0]
        assert ToeplitzWeights.identity().K == 0

    def test_banded_variants(self):
        assert np.allclose(ToeplitzWeights.banded(3).gamma, [0, 1 / 3, 1 / 3, 1 / 3])
        assert np.allclose(ToeplitzWeights.banded(3, include_diagonal=True).gamma, [0.25] * 4)

    def test_json_roundtrip(self):
        w = ToeplitzWeights.normalized([1, 2, 3])
        assert json.loads(w.to_json()) == w.gamma.tolist()
        assert ToeplitzWeights.from_json(w.to_json()).allclose(w)

    def test_dense_matches_definition(self):
        w = ToeplitzWeights(np.array([0.2, 0.3, 0.5]))
        assert np.array_equal(w.dense(6), dense_toeplitz([0.2, 0.3, 0.5], 6))

    @given(simplex)
    def test_normalized_lies_on_simplex(self, v):
        w = ToeplitzWeights.normalized(v)
        assert abs(w.gamma.sum() - 1) <= 1e-12 and np.all(w.gamma >= 0)


class TestGrid:
    def test_default_grid_has_ten_points(self):
        g = build_grid(1, 1 / 9)
        assert len(g) == 10
        got = sorted(w.gamma[0] for w in g)
        assert np.allclose(got, np.arange(10) / 9, atol=1e-15)
        for w in g:
            assert w.gamma.sum() == 1.0

    def test_single_vertex(self):
        g = build_grid(0, 1)
        assert len(g) == 1 and g[0].gamma.tolist() == [1.0]

    def test_k2_half_lattice(self):
        # All triples of multiples of 1/2 summing to 1, enumerated by hand.
        expected = {(1, 0, 0), (0.5, 0.5, 0), (0.5, 0, 0.5), (0, 1, 0), (0, 0.5, 0.5), (0, 0, 1)}
        g = build_grid(2, 0.5)
        assert {tuple(w.gamma.tolist()) for w in g} == expected
        assert len(g) == 6

    def test_identity_first_and_lexicographic(self):
        g = build_grid(2, 0.25)
        assert g[0].gamma.tolist() == [1.0, 0.0, 0.0]
        keys = [tuple(w.gamma) for w in g]
        assert keys == sorted(keys, reverse=True)

    def test_non_lattice_step(self):
        with pytest.raises(ParameterError):
            build_grid(1, 0.3)
        with pytest.raises(ParameterError):
            build_grid(-1, 0.5)

    def test_duplicates_rejected(self):
        with pytest.raises(ValidationError):
            grid_from_gammas([[1.0], [1.0, 0.0]])
        with pytest.raises(ValidationError):
            WeightGrid(())

    @given(st.integers(0, 3), st.integers(1, 6))
    def test_grid_size_is_binomial(self, K, n):
        from math import comb

        g = build_grid(K, 1 / n)
        assert len(g) == comb(n + K, K)


class TestWeightedGram:
    def test_identity_is_plain_gram(self, rng):
        X = rng.standard_normal((4, 9))
        G = weighted_gram(X, ToeplitzWeights.identity())
        assert np.allclose(G, X @ X.T, rtol=1e-14, atol=1e-12)

    def test_row_vector_example(self):
        # 0.5*(1+4+9) + 0.5*2*(1*2 + 2*3) = 15
        G = weighted_gram(np.array([[1.0, 2.0, 3.0]]), ToeplitzWeights(np.array([0.5, 0.5])))
        assert G.shape == (1, 1) and abs(G[0, 0] - 15.0) < 1e-12

    def test_matches_dense_q(self, rng):
        X = rng.standard_normal((3, 5))
        gamma = [0.0, 0.4, 0.6]
        G = weighted_gram(X, ToeplitzWeights(np.array(gamma)))
        assert np.allclose(G, X @ dense_toeplitz(gamma, 5) @ X.T, rtol=0, atol=1e-12)

    @given(simplex, st.integers(5, 12), st.integers(1, 5), st.integers(0, 10**6))
    def test_matches_dense_q_property(self, v, T, N, seed):
        w = ToeplitzWeights.normalized(v)
        X = np.random.default_rng(seed).standard_normal((N, T))
        G = weighted_gram(X, w)
        D = X @ dense_toeplitz(w.gamma, T) @ X.T
        assert np.allclose(G, D, rtol=1e-10, atol=1e-10 * max(1.0, np.abs(D).max()))
        assert np.array_equal(G, G.T)

    def test_lag_one_is_symmetrized_autocovariance(self, rng):
        X = rng.standard_normal((4, 10))
        G = weighted_gram(X, ToeplitzWeights.lag(1))
        ref = sum(np.outer(X[:, t], X[:, t + 1]) + np.outer(X[:, t + 1], X[:, t]) for t in range(9))
        assert np.allclose(G, ref, atol=1e-12)

    def test_lag_too_large(self, rng):
        with pytest.raises(ParameterError):
            weighted_gram(rng.standard_normal((2, 3)), ToeplitzWeights.lag(3))

    def test_lag_grams_exactly_symmetric(self, rng):
        grams = lag_grams(rng.standard_normal((7, 30)), [0, 1, 2])
        for S in grams.values():
            assert np.array_equal(S, S.T)

    @given(simplex, st.floats(1e-3, 1e3), st.integers(0, 10**6))
    def test_eigvecs_scale_neutral(self, v, c, seed):
        w = ToeplitzWeights.normalized(v)
        X = np.random.default_rng(seed).standard_normal((6, 15))
        G = weighted_gram(X, w)
        _, U1 = sym_eig_topr(G, 2)
        _, U2 = sym_eig_topr(c * G, 2)
        _, Uo = top_abs_eigvecs(G, 2)
        if _gap(G, 2) > 1e-6:
            assert proj_dist(U1, U2) <= 1e-10
            assert proj_dist(U1, Uo) <= 1e-8


def _gap(S, r):
    a = np.sort(np.abs(np.linalg.eigvalsh(S)))[::-1]
    return (a[r - 1] - a[r]) / max(a[0], 1e-300)


class TestToeplitzApply:
    @given(simplex, st.integers(5, 15), st.integers(0, 10**6))
    def test_matches_dense(self, v, T, seed):
        w = ToeplitzWeights.normalized(v)
        Y = np.random.default_rng(seed).standard_normal((T, 3))
        assert np.allclose(toeplitz_apply(w, Y), dense_toeplitz(w.gamma, T) @ Y, atol=1e-12)


class TestMuGamma:
    def test_identity_weight(self, rng):
        assert mu_gamma(ToeplitzWeights.identity(), [], r=3) == pytest.approx(1.0)
        assert mu_gamma(ToeplitzWeights(np.array([1.0, 0.0])), [rng.standard_normal((2, 2))]) == pytest.approx(1.0)

    def test_lag_one_finite_t(self):
        # (1 - 1/100) * 2 * 0.9 = 1.782
        assert mu_gamma(ToeplitzWeights.lag(1), [0.9 * np.eye(3)], T=100) == pytest.approx(1.782, abs=1e-12)

    def test_negative_autocov_limit(self):
        assert mu_gamma(ToeplitzWeights.lag(1), [-0.5 * np.eye(2)]) == pytest.approx(1.0, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            mu_gamma(ToeplitzWeights.normalized([0, 1, 1]), [np.eye(2), np.eye(3)])
