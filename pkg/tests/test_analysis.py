import dataclasses

import numpy as np
import pytest

from sinkhorn_mpc import (
    FixedCount,
    FleetScenario,
    LinearSystem,
    Marginals,
    MarginalTolerance,
    build_mpc_law,
    discretize_euler,
    dual_objective,
    entropic_cost,
    entropic_cost_gradient,
    epsilon_sweep,
    equilibrium_residual,
    exponential_equilibrium_check,
    find_equilibrium,
    lyapunov_V,
    run,
    ultimate_bound,
)
from sinkhorn_mpc.analysis import tight_plan
from sinkhorn_mpc.errors import ParameterError
from sinkhorn_mpc.simulator import _Fleet

SCALAR = LinearSystem(A=[[1.0]], B=[[0.1]])


def scalar_fleet(N, x0, targets, eps=0.1, S=5, steps=100, **kw):
    kw.setdefault("log_diagnostics", False)
    return FleetScenario(
        systems=(SCALAR,) * N,
        x0=np.asarray(x0, dtype=float).reshape(N, 1),
        targets=np.asarray(targets, dtype=float).reshape(-1, 1),
        marginals=Marginals.uniform(N),
        epsilon=eps,
        tau_h=20,
        schedule=FixedCount(S),
        step_count=steps,
        **kw,
    )


def random_planar_fleet(rng, N=3, eps=4.0):
    cont = LinearSystem(A=[[2.0, 1.3], [-0.5, 1.0]], B=np.eye(2), flavor="continuous")
    disc = discretize_euler(cont, 0.02)
    return FleetScenario(
        systems=(disc,) * N,
        x0=rng.uniform(-0.6, 0.6, (N, 2)),
        targets=rng.uniform(-0.6, 0.6, (N, 2)),
        marginals=Marginals.uniform(N),
        epsilon=eps,
        tau_h=100,
        schedule=FixedCount(5),
        step_count=10,
        log_diagnostics=False,
    )


class TestEntropicCost:
    def test_single_agent_closed_form(self):
        # one agent: P = [[1]], H(P) = 1, so E = C11 - eps
        sc = scalar_fleet(1, [[2.0]], [[0.5]], eps=0.3)
        law = build_mpc_law(SCALAR, 20)
        c11 = float(law.Gcal[0, 0] * (2.0 - 0.5) ** 2)
        assert entropic_cost(sc.x0, sc) == pytest.approx(c11 - 0.3, rel=1e-12)

    def test_large_epsilon_approaches_uniform_plan_value(self):
        rng = np.random.default_rng(2)
        sc = random_planar_fleet(rng, N=4)
        fleet = _Fleet(sc)
        C = fleet.cost_matrix(sc.x0)
        big = dataclasses.replace(sc, epsilon=1e6 * C.max())
        expected = C.mean() - big.epsilon * (2.0 * np.log(4) + 1.0)
        assert entropic_cost(big.x0, big) == pytest.approx(expected, rel=1e-9)

    def test_lower_bound_from_entropy_cap(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            sc = random_planar_fleet(rng, N=4)
            x = rng.uniform(-0.6, 0.6, (4, 2))
            C = _Fleet(sc).cost_matrix(x)
            lower = C.min(axis=1).mean() - sc.epsilon * (2.0 * np.log(4) + 1.0)
            assert entropic_cost(x, sc) >= lower - 1e-10


class TestGradient:
    def test_single_agent_closed_form(self):
        sc = scalar_fleet(1, [[1.5]], [[0.2]], eps=0.5)
        law = build_mpc_law(SCALAR, 20)
        grad = entropic_cost_gradient(sc.x0, sc)
        expected = 2.0 * law.Gcal[0, 0] * (1.5 - 0.2)
        assert grad[0, 0] == pytest.approx(expected, rel=1e-10)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(7)
        sc = random_planar_fleet(rng, N=3)
        for _ in range(4):
            x = rng.uniform(-0.6, 0.6, (3, 2))
            grad = entropic_cost_gradient(x, sc)
            fd = np.zeros_like(grad)
            step = 1e-5
            for i in range(3):
                for d in range(2):
                    xp = x.copy()
                    xp[i, d] += step
                    xm = x.copy()
                    xm[i, d] -= step
                    fd[i, d] = (entropic_cost(xp, sc) - entropic_cost(xm, sc)) / (
                        2.0 * step
                    )
            np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-8)

    def test_vanishes_at_equilibrium(self):
        targets = np.array([[-0.6], [0.0], [0.6]])
        sc = scalar_fleet(3, targets, targets, eps=0.01)
        anchor = find_equilibrium(sc, targets.copy())
        grad = entropic_cost_gradient(anchor.x, sc)
        assert np.abs(grad).max() < 1e-7


class TestEquilibriumResidual:
    def test_zero_for_single_agent_at_target(self):
        sc = scalar_fleet(1, [[0.4]], [[0.4]])
        assert equilibrium_residual(sc.x0, sc).residual < 1e-12

    def test_centroid_is_equilibrium_for_any_epsilon(self):
        targets = np.array([[-1.0], [0.0], [1.0]])
        centroid = np.full((3, 1), targets.mean())
        sc = scalar_fleet(3, centroid, targets, eps=50.0)
        assert equilibrium_residual(centroid, sc).residual < 1e-10

    def test_decreases_along_converged_run(self):
        sc = scalar_fleet(
            3, [[-1.4], [0.3], [1.2]], [[-0.9], [0.0], [0.8]], eps=0.02, steps=400
        )
        log = run(sc)
        first = equilibrium_residual(log.states[0], sc).residual
        last = equilibrium_residual(log.final_state, sc).residual
        assert last < 1e-4 < first


class TestLyapunov:
    def make_anchor(self):
        targets = np.array([[-0.6], [-0.2], [0.2], [0.6]])
        sc = scalar_fleet(4, targets, targets, eps=0.02, S=1, steps=150,
                          snapshots="on")
        anchor = find_equilibrium(sc, targets.copy())
        return sc, anchor

    def test_zero_at_anchor(self):
        sc, anchor = self.make_anchor()
        assert lyapunov_V(anchor.x, anchor.beta, anchor, sc) == pytest.approx(0.0, abs=1e-12)

    def test_state_perturbation_gives_quadratic_term_only(self):
        sc, anchor = self.make_anchor()
        law = build_mpc_law(SCALAR, 20)
        dx = np.array([[0.01], [-0.02], [0.005], [0.0]])
        v = lyapunov_V(anchor.x + dx, anchor.beta, anchor, sc)
        expected = float(law.Gcal[0, 0]) * float((dx**2).sum())
        # anchor targets sit within 1e-10 of the fixed point, so near equality
        assert v == pytest.approx(expected, rel=1e-4)

    def test_nonincreasing_along_single_iteration_run(self):
        sc, anchor = self.make_anchor()
        start = anchor.x + 0.02 * np.array([[1.0], [-1.0], [0.5], [-0.5]])
        sc2 = dataclasses.replace(sc, x0=start)
        log = run(sc2)
        V = np.array(
            [
                lyapunov_V(log.states[k], log.couplings[k].scaling.beta, anchor, sc2)
                for k in range(log.step_count)
            ]
        )
        assert np.all(np.diff(V) <= 1e-9 * (1.0 + V[:-1]))
        assert V[-1] < 0.1 * V[0]


class TestUltimateBound:
    def test_scalar_frozen_value(self):
        targets = np.array([[1.0], [-0.5]])
        sc = scalar_fleet(2, [[0.0], [0.2]], targets)
        report = ultimate_bound(sc, nu=0.01)
        assert report.rho[0] == pytest.approx(0.95, rel=1e-12)
        assert report.kappa[0] == pytest.approx(1.0)
        assert report.r_bar == 1.0
        assert report.bound[0] == pytest.approx(1.25, rel=1e-10)

    def test_normal_closed_loop_has_unit_kappa(self):
        # A = I, B = I: Abar is symmetric, so norms equal powers of rho
        sys = LinearSystem(A=np.eye(2), B=np.eye(2))
        sc = FleetScenario(
            systems=(sys,),
            x0=np.zeros((1, 2)),
            targets=np.array([[1.0, 0.0]]),
            marginals=Marginals.uniform(1),
            epsilon=1.0,
            tau_h=5,
            schedule=FixedCount(1),
            step_count=1,
            log_diagnostics=False,
        )
        report = ultimate_bound(sc, nu=0.01)
        assert report.kappa[0] == pytest.approx(1.0)

    def test_margin_validation(self):
        sc = scalar_fleet(2, [[0.0], [0.2]], [[1.0], [-0.5]])
        with pytest.raises(ParameterError):
            ultimate_bound(sc, nu=0.2)  # rho + nu = 1.15 >= 1

    def test_run_respects_bound_after_settling(self):
        sc = scalar_fleet(
            3, [[-2.0], [1.4], [2.1]], [[-0.9], [0.1], [0.9]], steps=400
        )
        log = run(sc)
        report = ultimate_bound(sc, nu=0.01)
        delta = 1e-6
        settle = report.settling_index(sc.x0, delta)
        for i in range(3):
            norms = np.linalg.norm(log.states[settle[i]:, i, :], axis=1)
            assert np.all(norms < report.bound[i] + delta)


class TestDualObjective:
    def test_zero_duals_on_ones_kernel(self):
        # all agents on the single repeated target: every cost is zero
        point = np.array([[0.3]])
        sc = scalar_fleet(3, np.tile(point, (3, 1)), np.tile(point, (3, 1)), eps=0.7)
        value, gf, gg = dual_objective(np.zeros(3), np.zeros(3), sc.x0, sc)
        assert value == pytest.approx(-0.7 * 9.0, rel=1e-12)

    def test_gradients_vanish_at_converged_duals(self):
        rng = np.random.default_rng(12)
        sc = random_planar_fleet(rng, N=4)
        x = rng.uniform(-0.6, 0.6, (4, 2))
        P, C, u, v = tight_plan(sc, x)
        f = sc.epsilon * u
        g = sc.epsilon * v
        value, gf, gg = dual_objective(f, g, x, sc)
        assert np.abs(gf).max() < 1e-9
        assert np.abs(gg).max() < 1e-9

    def test_strong_duality_at_optimum(self):
        rng = np.random.default_rng(14)
        sc = random_planar_fleet(rng, N=4)
        x = rng.uniform(-0.6, 0.6, (4, 2))
        P, C, u, v = tight_plan(sc, x)
        value, _, _ = dual_objective(sc.epsilon * u, sc.epsilon * v, x, sc)
        E = entropic_cost(x, sc)
        assert abs(value - E) <= 1e-8 * (1.0 + abs(E))

    def test_overflow_raises(self):
        sc = scalar_fleet(2, [[0.0], [1.0]], [[0.5], [1.5]], eps=1e-3)
        with pytest.raises(Exception):
            dual_objective(np.array([1e5, 1e5]), np.zeros(2), sc.x0, sc)


class TestEpsilonSweep:
    def test_single_agent_rows_identical(self):
        sc = scalar_fleet(1, [[1.0]], [[0.2]], steps=2000)
        rows = epsilon_sweep(sc, [0.5, 5.0])
        for r in rows:
            assert r.steady
            assert abs(r.state[0, 0] - 0.2) < 1e-6
        np.testing.assert_allclose(rows[0].state, rows[1].state, atol=1e-7)

    def test_rejects_empty_or_unsorted_grid(self):
        sc = scalar_fleet(1, [[1.0]], [[0.2]])
        with pytest.raises(ParameterError):
            epsilon_sweep(sc, [])
        with pytest.raises(ParameterError):
            epsilon_sweep(sc, [2.0, 1.0])

    def test_blur_is_monotone_in_epsilon(self):
        targets = np.array([[-0.6], [-0.1], [0.5]])
        sc = scalar_fleet(
            3, [[-1.0], [0.2], [0.9]], targets, steps=3000
        )
        fleet = _Fleet(sc)
        maxC = fleet.cost_matrix(sc.x0).max()
        rows = epsilon_sweep(sc, [0.003 * maxC, 0.1 * maxC, 3.0 * maxC, 100.0 * maxC])
        gaps = []
        for r in rows:
            assert r.error is None
            rep = equilibrium_residual(r.state, dataclasses.replace(sc, epsilon=r.epsilon))
            gaps.append(np.linalg.norm(rep.coupling.P - 1.0 / 9.0))
        assert all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))
        # steady states drift toward the target centroid as epsilon grows
        centroid = targets.mean()
        drift = [np.abs(r.state.ravel() - centroid).max() for r in rows]
        assert all(d1 >= d2 - 1e-12 for d1, d2 in zip(drift, drift[1:]))


class TestExponentialEquilibriumCheck:
    def test_two_agent_symmetric_basins(self):
        targets = np.array([[-0.5], [0.5]])
        sc = scalar_fleet(2, targets, targets, eps=0.1)
        fleet = _Fleet(sc)
        maxC = fleet.cost_matrix(sc.x0).max()
        grid = [0.3 * maxC, 0.03 * maxC, 0.003 * maxC]
        rep_id = exponential_equilibrium_check(sc, [0, 1], grid)
        rep_swap = exponential_equilibrium_check(sc, [1, 0], grid)
        for rep, sigma in ((rep_id, [0, 1]), (rep_swap, [1, 0])):
            last = rep.rows[-1]
            assert last.converged
            assert last.state_gap < 1e-3
            assert rep.slope < 0
        # distinct equilibria from the two warm starts at the sharpest epsilon
        assert rep_id.rows[-1].plan_gap < 1e-3
        assert rep_swap.rows[-1].plan_gap < 1e-3

    def test_blur_at_large_epsilon(self):
        targets = np.array([[-0.5], [0.5]])
        sc = scalar_fleet(2, targets, targets)
        fleet = _Fleet(sc)
        maxC = fleet.cost_matrix(sc.x0).max()
        rep = exponential_equilibrium_check(sc, [0, 1], [100.0 * maxC])
        assert rep.rows[0].converged
        assert rep.rows[0].state_gap > 0.1  # far from the permutation point

    def test_decay_is_monotone_and_superlinear(self):
        targets = np.array([[-0.6], [0.0], [0.6]])
        sc = scalar_fleet(3, targets, targets)
        fleet = _Fleet(sc)
        maxC = fleet.cost_matrix(sc.x0).max()
        grid = [maxC * 10 ** (-k) for k in range(4)]
        rep = exponential_equilibrium_check(sc, [0, 1, 2], grid)
        gaps = [r.state_gap for r in rep.rows if r.converged]
        assert all(g1 > g2 for g1, g2 in zip(gaps, gaps[1:]))
        assert rep.slope < 0
        # log gap drops faster than linearly in 1/eps: the slope over the
        # last decade above the float floor is steeper than the first
        rows = [r for r in rep.rows if r.converged and r.state_gap > 1e-200]
        inv_eps = [1.0 / r.epsilon for r in rows]
        logg = [np.log(r.state_gap) for r in rows]
        slopes = [
            (logg[i + 1] - logg[i]) / (inv_eps[i + 1] - inv_eps[i])
            for i in range(len(rows) - 1)
        ]
        assert len(slopes) >= 2
        assert slopes[-1] <= slopes[0]

    def test_input_validation(self):
        targets = np.array([[-0.5], [0.5]])
        sc = scalar_fleet(2, targets, targets)
        with pytest.raises(ParameterError):
            exponential_equilibrium_check(sc, [0, 0], [1.0])
        with pytest.raises(ParameterError):
            exponential_equilibrium_check(sc, [0, 1], [1.0, 2.0])  # ascending


class TestFineStepDescent:
    def test_entropic_cost_descent_and_dual_descent(self):
        # Euler step 1e-3; schedule keeps the plan near-optimal every step
        cont = LinearSystem(A=[[2.0, 1.3], [-0.5, 1.0]], B=np.eye(2), flavor="continuous")
        disc = discretize_euler(cont, 1e-3)
        N = 5
        ang = np.linspace(0, 2 * np.pi, N, endpoint=False)
        targets = 0.5 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        x0 = 0.55 * np.stack([np.cos(ang + 0.35), np.sin(ang + 0.35)], axis=1)
        sc = FleetScenario(
            systems=(disc,) * N,
            x0=x0,
            targets=targets,
            marginals=Marginals.uniform(N),
            epsilon=20.0,
            tau_h=1000,
            schedule=MarginalTolerance(1e-6, cap=30_000),
            step_count=8000,
            log_diagnostics=True,
            snapshots="on",
        )
        log = run(sc)
        dE = np.diff(log.entropic_cost)
        assert np.all(dE <= 1e-8)
        assert equilibrium_residual(log.final_state, sc).residual < 1e-4
        start = int(0.2 * log.step_count)
        for k in range(start, log.step_count):
            cpl = log.couplings[k]
            f = sc.epsilon * np.log(cpl.scaling.alpha)
            g = sc.epsilon * np.log(cpl.scaling.beta)
            q0, _, _ = dual_objective(f, g, log.states[k], sc)
            q1, _, _ = dual_objective(f, g, log.states[k + 1], sc)
            assert q1 - q0 <= 1e-9
