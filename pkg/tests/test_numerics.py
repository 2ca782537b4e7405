import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qmsr import ValidationError
from qmsr.numerics import (
    pivoted_qr_column_order,
    pseudo_inverse_apply,
    reduced_svd,
    ridge_lsq_left,
    ridge_objective,
)

from oracles import central_difference_jacobian, greedy_pivot_order, jacobi_eigenvalues


class TestReducedSvd:
    def test_identity(self):
        f = reduced_svd(np.eye(3))
        np.testing.assert_allclose(f.singular_values, [1, 1, 1])
        np.testing.assert_allclose(f.left @ f.right_t, np.eye(3), atol=1e-14)
        np.testing.assert_allclose(f.left.T @ f.left, np.eye(3), atol=1e-14)

    def test_rank_deficiency_truncates(self):
        f = reduced_svd(np.diag([3.0, 0.0]), rank_tolerance=1e-12)
        assert f.rank == 1
        np.testing.assert_array_equal(f.singular_values, [3.0])

    def test_singular_values_match_jacobi_oracle(self, rng):
        A = rng.standard_normal((20, 8))
        f = reduced_svd(A)
        expected = np.sqrt(jacobi_eigenvalues(A.T @ A))
        np.testing.assert_allclose(f.singular_values, expected, rtol=1e-9)

    @pytest.mark.parametrize("shape", [(200, 200), (150, 30), (30, 150), (1, 5)])
    def test_round_trip_and_orthonormality(self, rng, shape):
        A = rng.standard_normal(shape)
        f = reduced_svd(A)
        assert np.linalg.norm(A - f.reconstruct()) <= 1e-10 * np.linalg.norm(A)
        assert np.max(np.abs(f.left.T @ f.left - np.eye(f.rank))) <= 1e-12
        assert np.all(np.diff(f.singular_values) <= 0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            reduced_svd(np.array([[1.0, np.nan]]))

    def test_sign_convention_is_deterministic(self, rng):
        A = rng.standard_normal((30, 10))
        f = reduced_svd(A)
        g = reduced_svd(A.copy())
        np.testing.assert_array_equal(f.left, g.left)
        assert np.all(f.left[np.argmax(np.abs(f.left), axis=0), np.arange(f.rank)] > 0)


class TestPivotedQr:
    def test_norm_ordering(self):
        A = np.array([[2.0, 0.0], [0.0, 1.0]])
        assert pivoted_qr_column_order(A).tolist() == [0, 1]

    def test_matches_residual_norm_oracle(self, rng):
        A = rng.standard_normal((6, 6))
        assert pivoted_qr_column_order(A).tolist() == greedy_pivot_order(A)

    def test_wide_matrix_oracle(self, rng):
        A = rng.standard_normal((5, 40))
        assert pivoted_qr_column_order(A, count=5).tolist() == greedy_pivot_order(A)

    def test_tie_goes_to_lowest_index(self):
        A = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 0.0]])
        assert pivoted_qr_column_order(A).tolist() == [0, 1, 2]

    def test_full_order_is_permutation(self, rng):
        A = rng.standard_normal((3, 10))
        order = pivoted_qr_column_order(A)
        assert sorted(order.tolist()) == list(range(10))

    def test_deterministic(self, rng):
        A = rng.standard_normal((8, 50))
        runs = {tuple(pivoted_qr_column_order(A.copy()).tolist()) for _ in range(3)}
        assert len(runs) == 1


class TestRidge:
    def test_scalar(self):
        np.testing.assert_allclose(ridge_lsq_left([[1.0]], [[1.0]], 1.0), [[-0.5]])

    def test_zero_features(self, rng):
        W = ridge_lsq_left(rng.standard_normal((4, 6)), np.zeros((3, 6)), 1.0)
        np.testing.assert_array_equal(W, np.zeros((4, 3)))

    def test_gradient_vanishes_by_finite_differences(self, rng):
        R = rng.standard_normal((4, 10))
        H = rng.standard_normal((3, 10))
        gamma = 1e-8
        W = ridge_lsq_left(R, H, gamma)

        def objective(w):
            return np.array([ridge_objective(R, H, w.reshape(4, 3), gamma)])

        # the objective is quadratic, so central differences carry no truncation error
        grad = central_difference_jacobian(objective, W.ravel(), 1e-3)
        assert np.linalg.norm(grad) <= 1e-8 * np.linalg.norm(R)
        # tighter analytic check of the same stationarity condition
        analytic = 2 * (R + W @ H) @ H.T + 2 * gamma * W
        assert np.linalg.norm(analytic) <= 1e-8 * np.linalg.norm(R)

    def test_single_entry_perturbations_never_improve(self, rng):
        R = rng.standard_normal((3, 7))
        H = rng.standard_normal((2, 7))
        gamma = 0.1
        W = ridge_lsq_left(R, H, gamma)
        base = ridge_objective(R, H, W, gamma)
        delta = 1e-6 * np.linalg.norm(W)
        for idx in np.ndindex(W.shape):
            for sign in (1, -1):
                Wp = W.copy()
                Wp[idx] += sign * delta
                assert ridge_objective(R, H, Wp, gamma) >= base

    def test_errors(self):
        with pytest.raises(ValidationError):
            ridge_lsq_left(np.ones((2, 3)), np.ones((2, 4)), 1.0)
        with pytest.raises(ValidationError):
            ridge_lsq_left(np.ones((2, 3)), np.ones((2, 3)), 0.0)

    def test_ill_conditioned_features_fall_back(self, rng):
        H = np.outer(rng.standard_normal(3), rng.standard_normal(8)) * 1e6
        R = rng.standard_normal((2, 8))
        W = ridge_lsq_left(R, H, 1e-10)
        assert np.all(np.isfinite(W))


class TestPseudoInverse:
    def test_identity(self):
        x, rank = pseudo_inverse_apply(np.eye(2), [5.0, 6.0])
        np.testing.assert_allclose(x, [5, 6])
        assert rank == 2

    def test_single_column(self):
        a = np.full((2, 1), 1 / np.sqrt(3))
        x, rank = pseudo_inverse_apply(a, [2.0, 4.0])
        # a^+ b = a.b / |a|^2 = (6/sqrt(3)) / (2/3) = 3 sqrt(3)
        np.testing.assert_allclose(x, [3 * np.sqrt(3)], rtol=1e-14)
        assert rank == 1

    def test_zero_matrix(self):
        x, rank = pseudo_inverse_apply(np.zeros((3, 2)), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(x, [0.0, 0.0])
        assert rank == 0

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (5, 5), elements=st.floats(-10, 10)),
           arrays(np.float64, 5, elements=st.floats(-10, 10)))
    def test_square_nonsingular_equals_solve(self, A, b):
        A = A + 25 * np.eye(5)  # diagonally dominant
        x, rank = pseudo_inverse_apply(A, b)
        assert rank == 5
        direct = np.linalg.solve(A, b)
        assert np.linalg.norm(x - direct) <= 1e-10 * max(np.linalg.norm(direct), 1e-300)
