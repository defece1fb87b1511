import numpy as np
import pytest

from sinkhorn_mpc import brute_force_assignment, hungarian
from sinkhorn_mpc.errors import DimensionError, SizeCapError


class TestBruteForce:
    def test_1x1(self):
        out = brute_force_assignment(np.array([[3.5]]))
        assert out.sigma.tolist() == [0]
        assert out.total_cost == 3.5

    def test_2x2_diagonal_optimum(self):
        out = brute_force_assignment(np.array([[0.0, 5.0], [5.0, 0.0]]))
        assert out.sigma.tolist() == [0, 1]
        assert out.total_cost == 0.0

    def test_tie_break_is_lexicographic(self):
        out = brute_force_assignment(np.full((3, 3), 2.0))
        assert out.sigma.tolist() == [0, 1, 2]
        assert out.total_cost == 6.0

    def test_size_cap(self):
        with pytest.raises(SizeCapError):
            brute_force_assignment(np.zeros((10, 10)))


class TestHungarian:
    def test_zero_diagonal_prefers_identity(self):
        C = np.ones((4, 4)) + np.arange(16).reshape(4, 4) * 0.1
        np.fill_diagonal(C, 0.0)
        out = hungarian(C)
        assert out.sigma.tolist() == [0, 1, 2, 3]
        assert out.total_cost == 0.0

    def test_antidiagonal_swap(self):
        out = hungarian(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert out.sigma.tolist() == [1, 0]
        assert out.total_cost == 0.0

    def test_7x7_matches_brute_force_exactly(self):
        rng = np.random.default_rng(4)
        C = rng.uniform(0.0, 1.0, (7, 7))
        fast = hungarian(C)
        slow = brute_force_assignment(C)
        assert fast.total_cost == slow.total_cost
        assert np.array_equal(fast.sigma, slow.sigma)

    def test_rejects_rectangular(self):
        with pytest.raises(DimensionError):
            hungarian(np.zeros((3, 4)))

    def test_agreement_with_oracle_1000_trials(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            C = rng.uniform(0.0, 1.0, (n, n))
            assert hungarian(C).total_cost == brute_force_assignment(C).total_cost

    def test_permutation_matrix_bridge(self):
        # P^sigma with entries 1/N on the matching recovers cost / N exactly
        rng = np.random.default_rng(15)
        C = rng.uniform(0.0, 1.0, (6, 6))
        out = hungarian(C)
        P = np.zeros((6, 6))
        P[np.arange(6), out.sigma] = 1.0 / 6.0
        assert (C * P).sum() == pytest.approx(out.total_cost / 6.0, rel=1e-15)
