import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from arraynormal.linalg import (NotPositiveDefiniteError, SpdMatrix, cholesky,
                                conditional_blocks, kron_list, logdet, make_rng, rgamma,
                                rinvwish, spawn_rngs, sym_eigen, whiten)
from conftest import random_spd


class TestCholesky:
    def test_reconstructs(self, rng):
        S = random_spd(rng, 5)
        L = cholesky(S)
        np.testing.assert_allclose(L @ L.T, S, atol=1e-12)
        assert np.allclose(L, np.tril(L))

    def test_rejects_indefinite_with_pivot(self):
        S = np.diag([1.0, 2.0, -1.0])
        with pytest.raises(NotPositiveDefiniteError) as info:
            cholesky(S)
        assert info.value.pivot == 2

    def test_rejects_numerically_singular(self):
        v = np.array([1.0, 2.0, 3.0])
        with pytest.raises(NotPositiveDefiniteError):
            cholesky(np.outer(v, v))

    def test_ridge_rescues_singular(self):
        v = np.array([1.0, 2.0, 3.0])
        L = cholesky(np.outer(v, v), ridge=1e-3)
        assert np.all(np.diag(L) > 0)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_is_linalg_error(self):
        assert issubclass(NotPositiveDefiniteError, np.linalg.LinAlgError)


class TestSpdMatrix:
    def test_cached_quantities(self, rng):
        S = random_spd(rng, 4)
        A = SpdMatrix(S)
        np.testing.assert_allclose(A.inv, np.linalg.inv(S), rtol=1e-10)
        np.testing.assert_allclose(A.chol_inv @ A.chol, np.eye(4), atol=1e-12)
        assert A.logdet() == pytest.approx(np.linalg.slogdet(S)[1], rel=1e-12)
        assert logdet(S) == pytest.approx(A.logdet())
        B = rng.standard_normal((4, 2))
        np.testing.assert_allclose(A.solve(B), np.linalg.solve(S, B), rtol=1e-10)
        np.testing.assert_allclose(whiten(A, B), np.linalg.solve(A.chol, B), rtol=1e-10)

    def test_read_only(self, rng):
        A = SpdMatrix(random_spd(rng, 3))
        with pytest.raises(ValueError):
            A.values[0, 0] = 5.0

    def test_identity_flag(self):
        assert SpdMatrix.identity(3).is_identity()
        assert not SpdMatrix(2 * np.eye(3)).is_identity()

    def test_correlation(self, rng):
        S = random_spd(rng, 4)
        R = SpdMatrix(S).correlation()
        np.testing.assert_allclose(np.diag(R), 1.0)
        d = np.sqrt(np.diag(S))
        np.testing.assert_allclose(R * np.outer(d, d), S, rtol=1e-12)

    def test_from_factor(self, rng):
        L = np.tril(rng.standard_normal((3, 3))) + 3 * np.eye(3)
        np.testing.assert_allclose(SpdMatrix.from_factor(L).values, L @ L.T)


def test_kron_list_order(rng):
    A, B, C = (rng.standard_normal((i, i)) for i in (2, 3, 2))
    np.testing.assert_allclose(kron_list([A, B, C]), np.kron(np.kron(A, B), C))
    with pytest.raises(ValueError):
        kron_list([])


def test_sym_eigen_descending(rng):
    S = random_spd(rng, 6)
    w, V = sym_eigen(S)
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, S, atol=1e-10)
    np.testing.assert_allclose(V.T @ V, np.eye(6), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1), st.data())
def test_conditional_blocks_match_inverse(m, seed, data):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, m)
    perm = data.draw(st.permutations(range(m)))
    cut = data.draw(st.integers(1, m - 1))
    a, b = list(perm[:cut]), list(perm[cut:])
    reg, schur = conditional_blocks(S, a, b)
    # Schur complement equals the inverse of the precision block
    P = np.linalg.inv(S)
    np.testing.assert_allclose(schur, np.linalg.inv(P[np.ix_(b, b)]), atol=1e-9)
    np.testing.assert_allclose(reg, -np.linalg.solve(P[np.ix_(b, b)], P[np.ix_(b, a)]), atol=1e-9)


def test_conditional_blocks_empty_a(rng):
    S = random_spd(rng, 3)
    reg, schur = conditional_blocks(S, [], [0, 2])
    assert reg.shape == (2, 0)
    np.testing.assert_array_equal(schur, S[np.ix_([0, 2], [0, 2])])
    with pytest.raises(ValueError):
        conditional_blocks(S, [0], [0, 1])


class TestRandom:
    def test_make_rng_reproducible(self):
        assert make_rng(3).standard_normal() == make_rng(3).standard_normal()
        a, b = spawn_rngs(3, 2)
        assert a.standard_normal() != b.standard_normal()

    def test_rinvwish_mean(self):
        rng = make_rng(11)
        Psi = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]])
        nu = 12.0
        draws = np.array([rinvwish(Psi, nu, rng).values for _ in range(20000)])
        np.testing.assert_allclose(draws.mean(axis=0), Psi / (nu - 3 - 1), atol=0.01)

    def test_rinvwish_marginal_matches_inverse_gamma(self):
        # Sigma_11 ~ InvGamma((nu - m + 1)/2, Psi_11 / 2)
        rng = make_rng(5)
        Psi = np.array([[1.5, 0.3], [0.3, 0.8]])
        nu, m = 6.0, 2
        x = np.array([rinvwish(Psi, nu, rng).values[0, 0] for _ in range(4000)])
        ref = stats.invgamma((nu - m + 1) / 2, scale=Psi[0, 0] / 2)
        assert stats.kstest(x, ref.cdf).pvalue > 0.001

    def test_rinvwish_dof_check(self):
        with pytest.raises(ValueError):
            rinvwish(np.eye(3), 1.5, make_rng(0))

    def test_rgamma_rate(self):
        x = rgamma(3.0, 2.0, make_rng(0), size=100000)
        assert x.mean() == pytest.approx(1.5, rel=0.01)
        with pytest.raises(ValueError):
            rgamma(-1.0, 1.0, make_rng(0))
