"""Matrix-core contracts: SVD, SPD solves, and the basic arithmetic ops."""

import numpy as np
import pytest

from lrcompress.errors import (
    DecompositionError,
    DimensionError,
    NumericalError,
    SingularSystemError,
)
from lrcompress.linalg import (
    add_scaled_identity,
    as_matrix,
    frobenius_norm,
    matmul,
    solve_spd,
    svd,
    transpose,
)

from oracles import gaussian_solve, naive_matmul, singular_values_via_gram


class TestSvd:
    def test_identity(self):
        f = svd(np.eye(3))
        np.testing.assert_allclose(f.s, [1.0, 1.0, 1.0], atol=1e-12)

    def test_diagonal(self):
        """diag(3,2,1) factors into identity-like u and vt under the sign fix."""
        f = svd(np.diag([3.0, 2.0, 1.0]))
        np.testing.assert_allclose(f.s, [3.0, 2.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(f.u, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(f.vt, np.eye(3), atol=1e-12)

    def test_spectrum_matches_gram_eigen_oracle(self):
        """Singular values equal sqrt of the Jacobi-computed Gram spectrum."""
        rng = np.random.default_rng(31)
        a = rng.normal(size=(4, 5))
        np.testing.assert_allclose(svd(a).s, singular_values_via_gram(a), atol=1e-9)

    def test_factor_invariants(self):
        rng = np.random.default_rng(7)
        for shape in [(3, 3), (5, 2), (2, 7), (6, 6)]:
            a = rng.normal(size=shape)
            f = svd(a)
            r = min(shape)
            assert f.s.shape == (r,)
            assert (f.s >= 0).all()
            assert (np.diff(f.s) <= 0).all()
            assert np.linalg.norm(f.u.T @ f.u - np.eye(r)) < 1e-9
            assert np.linalg.norm(f.vt @ f.vt.T - np.eye(r)) < 1e-9
            rel = np.linalg.norm(f.reconstruct() - a) / np.linalg.norm(a)
            assert rel < 1e-8

    def test_sign_convention(self):
        """First nonzero entry of every left singular vector is non-negative."""
        rng = np.random.default_rng(11)
        for _ in range(20):
            u = svd(rng.normal(size=(6, 4))).u
            for j in range(u.shape[1]):
                nz = np.flatnonzero(u[:, j])
                assert u[nz[0], j] >= 0

    def test_norm_equals_spectrum(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = rng.normal(size=rng.integers(2, 8, size=2))
            f = svd(a)
            assert np.isclose(np.linalg.norm(a) ** 2, np.sum(f.s ** 2), rtol=1e-8)

    def test_truncation_error_is_discarded_spectrum(self):
        """Eckart-Young: squared truncation error equals the dropped spectrum."""
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.normal(size=(6, 9))
            f = svd(a)
            for k in (1, 3, 5):
                approx = f.truncated(k).reconstruct()
                err = np.linalg.norm(a - approx) ** 2
                expected = np.sum(f.s[k:] ** 2)
                assert np.isclose(err, expected, rtol=1e-8)

    def test_truncation_beats_random_rank_k(self):
        rng = np.random.default_rng(13)
        a = rng.normal(size=(6, 8))
        k = 2
        best = np.linalg.norm(a - svd(a).truncated(k).reconstruct())
        for _ in range(200):
            m = rng.normal(size=(6, k)) @ rng.normal(size=(k, 8))
            assert best <= np.linalg.norm(a - m) + 1e-12

    def test_rejects_empty_and_non_2d(self):
        with pytest.raises(DimensionError):
            svd(np.zeros((0, 3)))
        with pytest.raises(DimensionError):
            svd(np.zeros(4))

    def test_rejects_non_finite(self):
        with pytest.raises(NumericalError):
            svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


class TestSolveSpd:
    def test_identity_system(self):
        rhs = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(solve_spd(np.eye(2), rhs), rhs)

    def test_diagonal_system(self):
        out = solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
        np.testing.assert_allclose(out, [1.0, 1.0])

    def test_matches_elimination_oracle(self):
        rng = np.random.default_rng(17)
        g = rng.normal(size=(6, 6))
        m = g.T @ g + np.eye(6)
        rhs = rng.normal(size=(6, 2))
        out = solve_spd(m, rhs)
        residual = np.linalg.norm(m @ out - rhs) / np.linalg.norm(rhs)
        assert residual < 1e-8
        np.testing.assert_allclose(out, gaussian_solve(m, rhs), atol=1e-10)

    def test_residual_property(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            g = rng.normal(size=(n, n))
            m = g.T @ g + np.eye(n)
            rhs = rng.normal(size=(n, int(rng.integers(1, 4))))
            out = solve_spd(m, rhs)
            assert np.linalg.norm(m @ out - rhs) / np.linalg.norm(rhs) < 1e-8

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            solve_spd(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))

    def test_singular_system_advises_ridge(self):
        singular = np.diag([1.0, 0.0, 1.0])
        with pytest.raises(SingularSystemError, match="lambda"):
            solve_spd(singular, np.ones(3))

    def test_negative_definite_fails(self):
        with pytest.raises(SingularSystemError):
            solve_spd(-np.eye(3), np.ones(3))

    def test_rhs_shape_mismatch(self):
        with pytest.raises(DimensionError, match=r"\(3,"):
            solve_spd(np.eye(2), np.ones((3, 1)))


class TestBasicOps:
    def test_frobenius_zero(self):
        assert frobenius_norm(np.zeros((3, 4))) == 0.0

    def test_frobenius_three_four_five(self):
        assert frobenius_norm(np.diag([3.0, 4.0])) == 5.0

    def test_matmul_matches_triple_loop(self):
        rng = np.random.default_rng(23)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b),
                                   rtol=1e-14, atol=1e-14)

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.ones((2, 3)), np.ones((2, 2)))

    def test_transpose(self):
        a = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(transpose(a), a.T)

    def test_add_scaled_identity(self):
        out = add_scaled_identity(np.zeros((3, 3)), 2.5)
        np.testing.assert_array_equal(out, 2.5 * np.eye(3))
        with pytest.raises(DimensionError):
            add_scaled_identity(np.zeros((2, 3)), 1.0)

    def test_as_matrix_rejects_nan(self):
        with pytest.raises(NumericalError):
            as_matrix(np.array([[np.inf, 0.0]]))
