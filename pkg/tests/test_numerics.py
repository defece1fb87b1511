import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sinkhorn_mpc import (
    continuous_gramian,
    mat_power,
    matrix_exponential,
    spectral_radius,
)
from sinkhorn_mpc.errors import DimensionError, ParameterError

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)
square4 = arrays(np.float64, (4, 4), elements=finite)


def hand_multiply(A, B):
    """Independent triple-loop matrix product."""
    n, k = A.shape
    k2, m = B.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for l in range(k):
                acc += A[i, l] * B[l, j]
            out[i, j] = acc
    return out


class TestMatPower:
    def test_identity(self):
        assert np.array_equal(mat_power(np.eye(2), 5), np.eye(2))

    def test_scalar_one(self):
        assert np.array_equal(mat_power(np.array([[1.0]]), 19), np.array([[1.0]]))

    def test_zero_exponent(self):
        A = np.array([[2.0, 1.0], [0.5, -1.0]])
        assert np.array_equal(mat_power(A, 0), np.eye(2))

    def test_2x2_vs_hand_multiplication(self):
        A = np.array([[1.04, 0.026], [-0.01, 1.02]])
        expected = hand_multiply(A, A)
        np.testing.assert_allclose(mat_power(A, 2), expected, rtol=1e-14)

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionError):
            mat_power(np.ones((2, 3)), 2)

    def test_rejects_negative_exponent(self):
        with pytest.raises(ParameterError):
            mat_power(np.eye(2), -1)

    @given(A=square4, j=st.integers(0, 6), k=st.integers(0, 6))
    @settings(max_examples=50, deadline=None)
    def test_power_additivity(self, A, j, k):
        lhs = mat_power(A, j + k)
        rhs = mat_power(A, j) @ mat_power(A, k)
        scale = max(1.0, np.abs(lhs).max())
        np.testing.assert_allclose(lhs, rhs, atol=1e-10 * scale)


class TestSpectralRadius:
    def test_1x1(self):
        assert spectral_radius(np.array([[0.95]])) == 0.95

    def test_identity(self):
        assert spectral_radius(np.eye(2)) == 1.0

    def test_scalar_closed_loop_value(self):
        # A=1, B=0.1, tau=20: Abar = 1 - 0.01 * (1 / 0.2) = 0.95
        abar = 1.0 - 0.1 * 0.1 * (1.0 / 0.2)
        assert spectral_radius(np.array([[abar]])) == pytest.approx(0.95, rel=1e-14)

    def test_complex_pair(self):
        A = np.array([[0.0, 1.0], [-4.0, 0.0]])  # eigenvalues +-2i
        assert spectral_radius(A) == pytest.approx(2.0, rel=1e-12)

    def test_3x3_diagonal(self):
        assert spectral_radius(np.diag([0.2, -3.0, 1.5])) == pytest.approx(3.0)

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionError):
            spectral_radius(np.ones((2, 3)))

    @given(A=square4, c=st.floats(-4.0, 4.0, allow_nan=False))
    @settings(max_examples=40, deadline=None)
    def test_scaling_homogeneity(self, A, c):
        lhs = spectral_radius(c * A)
        rhs = abs(c) * spectral_radius(A)
        assert lhs == pytest.approx(rhs, abs=1e-10)


class TestMatrixExponential:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        out = matrix_exponential(np.diag([1.0, -2.0]))
        np.testing.assert_allclose(out, np.diag([np.e, np.exp(-2.0)]), rtol=1e-12)

    def test_nilpotent(self):
        out = matrix_exponential(np.array([[0.0, 1.0], [0.0, 0.0]]))
        np.testing.assert_allclose(out, np.array([[1.0, 1.0], [0.0, 1.0]]), rtol=1e-14)

    @given(A=square4)
    @settings(max_examples=30, deadline=None)
    def test_inverse_property_stable(self, A):
        A = A - (1.0 + spectral_radius(A)) * np.eye(4)
        prod = matrix_exponential(A) @ matrix_exponential(-A)
        np.testing.assert_allclose(prod, np.eye(4), atol=1e-9)


def quadrature_gramian(A, B, T, h=1e-4):
    """Trapezoid quadrature of the integrand with a fixed step."""
    Eh = scipy.linalg.expm(A * h)
    steps = int(round(T / h))
    BBt = B @ B.T
    E = np.eye(A.shape[0])
    f_prev = BBt.copy()
    total = np.zeros_like(BBt)
    for _ in range(steps):
        E = E @ Eh
        f = E @ BBt @ E.T
        total += 0.5 * h * (f_prev + f)
        f_prev = f
    return total


class TestContinuousGramian:
    def test_scalar_zero_dynamics(self):
        G = continuous_gramian(np.array([[0.0]]), np.array([[1.0]]), 2.0)
        assert G[0, 0] == pytest.approx(2.0, rel=1e-12)

    def test_identity_input(self):
        G = continuous_gramian(np.zeros((2, 2)), np.eye(2), 1.0)
        np.testing.assert_allclose(G, np.eye(2), rtol=1e-12)

    def test_against_quadrature_oracle(self):
        A = np.array([[2.0, 1.3], [-0.5, 1.0]])
        B = np.eye(2)
        G = continuous_gramian(A, B, 2.0)
        ref = quadrature_gramian(A, B, 2.0)
        np.testing.assert_allclose(G, ref, rtol=1e-6)

    def test_rejects_bad_horizon(self):
        with pytest.raises(ParameterError):
            continuous_gramian(np.eye(2), np.eye(2), 0.0)

    @given(A=square4, T=st.floats(0.1, 2.0))
    @settings(max_examples=30, deadline=None)
    def test_symmetric_positive_semidefinite(self, A, T):
        B = np.eye(4)
        G = continuous_gramian(A, B, T)
        np.testing.assert_allclose(G, G.T, atol=1e-12 * max(1.0, np.abs(G).max()))
        evals = np.linalg.eigvalsh(G)
        assert evals.min() >= -1e-10 * max(1.0, evals.max())
