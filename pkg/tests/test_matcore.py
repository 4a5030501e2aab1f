import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stbd import matcore
from stbd.errors import DegenerateChannel, InfeasibleDimensions, InvalidArgument

from conftest import crandn


class TestConvolutionMatrix:
    def test_unit_impulse_is_identity(self):
        np.testing.assert_array_equal(matcore.build_convolution_matrix([1.0], 3), np.eye(3))

    def test_two_taps(self):
        a, b = 2 + 1j, -0.5j
        expected = np.array([[a, 0], [b, a], [0, b]])
        np.testing.assert_array_equal(matcore.build_convolution_matrix([a, b], 2), expected)

    def test_frobenius_norm(self, rng):
        h = crandn(rng, 9)
        T = matcore.build_convolution_matrix(h, 30)
        assert T.shape == (38, 30)
        assert np.linalg.norm(T) ** 2 == pytest.approx(30 * np.linalg.norm(h) ** 2, rel=1e-13)

    def test_empty_taps_rejected(self):
        with pytest.raises(InvalidArgument):
            matcore.build_convolution_matrix([], 4)

    @settings(max_examples=50, deadline=None)
    @given(L=st.integers(1, 12), n=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
    def test_matches_direct_convolution(self, L, n, seed):
        rng = np.random.default_rng(seed)
        h, x = crandn(rng, L), crandn(rng, n)
        y = matcore.build_convolution_matrix(h, n) @ x
        ref = np.convolve(h, x)
        assert np.linalg.norm(y - ref) <= 1e-12 * np.linalg.norm(ref)


class TestSVD:
    def test_identity(self):
        np.testing.assert_allclose(matcore.svd(np.eye(5)).singular_values, np.ones(5))

    def test_diagonal(self):
        np.testing.assert_allclose(matcore.svd(np.diag([3.0, 2.0, 1.0])).singular_values, [3, 2, 1])

    def test_reconstruction_and_unitarity(self, rng):
        A = crandn(rng, 10, 6)
        U, s, Vh = matcore.svd(A)
        Sigma = np.zeros((10, 6))
        Sigma[:6, :6] = np.diag(s)
        assert np.linalg.norm(A - U @ Sigma @ Vh) < 1e-12 * np.linalg.norm(A)
        np.testing.assert_allclose(U.conj().T @ U, np.eye(10), atol=1e-12)
        np.testing.assert_allclose(Vh @ Vh.conj().T, np.eye(6), atol=1e-12)
        assert np.all(np.diff(s) <= 0)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgument):
            matcore.svd(np.zeros((0, 3)))


class TestNullSpace:
    def test_single_row(self):
        N = matcore.null_space_basis(np.array([[1.0, 0.0, 0.0]]), 2)
        assert N.shape == (3, 2)
        np.testing.assert_allclose(N.conj().T @ N, np.eye(2), atol=1e-14)
        np.testing.assert_allclose(N[0], 0.0, atol=1e-14)

    def test_empty_matrix_gives_whole_space(self):
        np.testing.assert_array_equal(matcore.null_space_basis(np.zeros((0, 4)), 4), np.eye(4))

    def test_interference_sized_stack(self, rng):
        A = crandn(rng, 38, 240)
        N = matcore.null_space_basis(A, 240 - 38)
        assert N.shape == (240, 202)
        assert np.linalg.norm(A @ N) < 1e-9 * np.linalg.norm(A)

    def test_nonpositive_nullity(self):
        with pytest.raises(InfeasibleDimensions):
            matcore.null_space_basis(np.ones((3, 3)), 0)

    def test_nullity_larger_than_possible(self, rng):
        with pytest.raises(InfeasibleDimensions):
            matcore.null_space_basis(crandn(rng, 3, 5), 3)

    def test_rank_deficient_draw_detected(self, rng):
        A = crandn(rng, 4, 10)
        A[3] = A[0]
        with pytest.raises(DegenerateChannel):
            matcore.null_space_basis(A, 6)

    @settings(max_examples=30, deadline=None)
    @given(p=st.integers(1, 30), extra=st.integers(1, 30), seed=st.integers(0, 2**32 - 1))
    def test_orthonormal_and_null(self, p, extra, seed):
        A = crandn(np.random.default_rng(seed), p, p + extra)
        N = matcore.null_space_basis(A, extra)
        assert np.linalg.norm(N.conj().T @ N - np.eye(extra)) < 1e-10
        assert np.linalg.norm(A @ N) / np.linalg.norm(A) < 1e-9


class TestHermitianEig:
    def test_sorted_descending(self):
        w, Q = matcore.hermitian_eig(np.diag([1.0, 2.0]))
        np.testing.assert_allclose(w, [2.0, 1.0])
        np.testing.assert_allclose(np.abs(Q), [[0, 1], [1, 0]])

    def test_gram_is_psd(self, rng):
        C = crandn(rng, 7, 5)
        w, _ = matcore.hermitian_eig(C.conj().T @ C)
        assert np.all(w >= -1e-12 * w[0])

    def test_reconstruction(self, rng):
        C = crandn(rng, 6, 6)
        A = C + C.conj().T
        w, Q = matcore.hermitian_eig(A)
        assert np.linalg.norm(Q @ np.diag(w) @ Q.conj().T - A) < 1e-12 * np.linalg.norm(A)

    def test_non_hermitian_rejected(self):
        with pytest.raises(InvalidArgument):
            matcore.hermitian_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    @settings(max_examples=25, deadline=None)
    @given(rows=st.integers(1, 64), cols=st.integers(1, 64), seed=st.integers(0, 2**32 - 1))
    def test_consistent_with_svd(self, rows, cols, seed):
        C = crandn(np.random.default_rng(seed), rows, cols)
        w, _ = matcore.hermitian_eig(C.conj().T @ C)
        s = matcore.svd(C).singular_values
        k = min(rows, cols)
        np.testing.assert_allclose(w[:k], s ** 2, rtol=1e-10, atol=1e-10 * s[0] ** 2)


class TestPseudoinverse:
    def test_identity(self):
        np.testing.assert_allclose(matcore.pseudoinverse(np.eye(4)), np.eye(4))

    def test_rectangular_diagonal_right_inverse(self):
        Sigma = np.zeros((3, 5))
        Sigma[[0, 1, 2], [0, 1, 2]] = [2.0, 1.0, 0.25]
        np.testing.assert_allclose(Sigma @ matcore.pseudoinverse(Sigma), np.eye(3), atol=1e-15)

    def test_penrose_conditions(self, rng):
        A = crandn(rng, 4, 7)
        X = matcore.pseudoinverse(A)
        scale = np.linalg.norm(A)
        assert np.linalg.norm(A @ X @ A - A) < 1e-10 * scale
        assert np.linalg.norm(X @ A @ X - X) < 1e-10 * np.linalg.norm(X)
        AX, XA = A @ X, X @ A
        assert np.linalg.norm(AX - AX.conj().T) < 1e-10
        assert np.linalg.norm(XA - XA.conj().T) < 1e-10

    def test_zero_matrix(self):
        np.testing.assert_array_equal(matcore.pseudoinverse(np.zeros((2, 3))), np.zeros((3, 2)))
