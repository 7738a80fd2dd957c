import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calibrated_cagp.errors import NotPositiveDefinite, ShapeMismatch, SingularTriangular
from calibrated_cagp.linalg import back_substitution, cholesky, forward_substitution, solve_spd

from conftest import random_spd


class TestForwardSubstitution:
    def test_hand_example(self):
        x = forward_substitution(np.array([[2.0, 0.0], [1.0, 2.0]]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(x, [0.5, 0.25], rtol=1e-15)

    def test_identity(self, rng):
        rhs = rng.standard_normal((4, 3))
        np.testing.assert_array_equal(forward_substitution(np.eye(4), rhs), rhs)

    def test_zero_diagonal(self):
        with pytest.raises(SingularTriangular):
            forward_substitution(np.array([[1.0, 0.0], [1.0, 0.0]]), np.ones(2))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            forward_substitution(np.eye(3), np.ones(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_solves_lower_system(self, d, seed):
        r = np.random.default_rng(seed)
        L = np.tril(r.standard_normal((d, d))) + 3 * np.eye(d) * np.sign(r.standard_normal(d))
        L[np.diag_indices(d)] += np.where(np.diagonal(L) >= 0, 1.0, -1.0)
        rhs = r.standard_normal(d)
        np.testing.assert_allclose(L @ forward_substitution(L, rhs), rhs, atol=1e-9)


class TestBackSubstitution:
    def test_hand_example(self):
        x = back_substitution(np.array([[2.0, 1.0], [0.0, 2.0]]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(x, [0.25, 0.5], rtol=1e-15)

    def test_identity(self, rng):
        rhs = rng.standard_normal(5)
        np.testing.assert_array_equal(back_substitution(np.eye(5), rhs), rhs)

    def test_zero_diagonal(self):
        with pytest.raises(SingularTriangular):
            back_substitution(np.array([[0.0, 1.0], [0.0, 1.0]]), np.ones(2))


class TestCholesky:
    def test_scalar(self):
        np.testing.assert_array_equal(cholesky(np.array([[4.0]])), [[2.0]])

    def test_reconstruction(self):
        A = np.array([[2.0, 0.9], [0.9, 2.0]])
        C = cholesky(A)
        assert np.abs(C @ C.T - A).max() < 1e-12
        assert C[0, 1] == 0.0

    def test_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_jitter_escalation_logged(self, caplog):
        # rank-one PSD matrix needs jitter
        v = np.array([1.0, 2.0, 3.0])
        with caplog.at_level(logging.WARNING):
            C = cholesky(np.outer(v, v))
        assert np.all(np.isfinite(C))
        assert "jitter" in caplog.text


class TestSolveSPD:
    def test_hand_example(self):
        x = solve_spd(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([1.0, 1.0]))
        np.testing.assert_allclose(x, [1 / 3, 1 / 3], rtol=1e-14)

    def test_identity(self, rng):
        rhs = rng.standard_normal(4)
        np.testing.assert_allclose(solve_spd(np.eye(4), rhs), rhs)

    def test_zero_rhs(self, rng):
        np.testing.assert_array_equal(solve_spd(random_spd(6, rng), np.zeros(6)), np.zeros(6))

    def test_random_against_numpy(self, rng):
        A = random_spd(20, rng)
        b = rng.standard_normal(20)
        np.testing.assert_allclose(solve_spd(A, b), np.linalg.solve(A, b), rtol=1e-10)
