"""Convergence and stability diagnostics for the closed loop.

Everything here evaluates measurable consequences of the theory: the
entropic transport cost and its gradient along trajectories, the
equilibrium residual against barycentric targets, a Lyapunov candidate
around a computed equilibrium, ultimate-boundedness constants from the
closed-loop matrices, the dual objective, and parameter sweeps.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    NumericalError,
    ParameterError,
    SinkhornMpcError,
    SizeCapError,
)
from .numerics import spectral_radius
from .otcore import Coupling, ScalingPair, _refine_coupling, hilbert_metric
from .simulator import FleetScenario, SimState, _Fleet, step

TIGHT_THETA = 1e-10
STEADY_MOTION_TOL = 1e-9
STEADY_RUN_LENGTH = 10
FIXED_POINT_CAP = 20_000


def _fleet(scenario: FleetScenario, fleet: _Fleet | None) -> _Fleet:
    return fleet or _Fleet(scenario)


def tight_plan(
    scenario: FleetScenario,
    x,
    fleet: _Fleet | None = None,
    theta: float = TIGHT_THETA,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
):
    """Converged plan at state x (marginal violation below theta).

    Returns (P, C, u, v) with the duals reusable as warm starts.
    """
    fleet = _fleet(scenario, fleet)
    x = np.asarray(x, dtype=float)
    C = fleet.cost_matrix(x)
    logK = -C / scenario.epsilon
    if warm is None:
        u0 = np.zeros(scenario.N)
        v0 = np.zeros(scenario.M)
    else:
        u0, v0 = warm
    u, v, P, _ = _refine_coupling(
        logK, scenario.marginals, u0, v0, theta=theta, sinkhorn_iters=500
    )
    return P, C, u, v


def plan_entropy(P: np.ndarray) -> float:
    """H(P) = -sum P_ij (log P_ij - 1), with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        logP = np.where(P > 0, np.log(np.where(P > 0, P, 1.0)), 0.0)
    return -float(np.sum(P * (logP - 1.0)))


def entropic_cost(x, scenario: FleetScenario, fleet: _Fleet | None = None) -> float:
    """Optimal regularized transport cost at state x.

    E(x) = sum_ij C_ij(x) P*_ij - epsilon H(P*) at the converged plan.
    """
    P, C, _, _ = tight_plan(scenario, x, fleet)
    return float((C * P).sum()) - scenario.epsilon * plan_entropy(P)


def entropic_cost_gradient(
    x, scenario: FleetScenario, fleet: _Fleet | None = None
) -> np.ndarray:
    """Per-agent gradient 2 Gcal_i sum_j P*_ij (x_i - target_j), shape (N, n)."""
    fleet = _fleet(scenario, fleet)
    x = np.asarray(x, dtype=float)
    P, _, _, _ = tight_plan(scenario, x, fleet)
    weighted = P @ scenario.targets  # row i: sum_j P_ij t_j
    rowmass = P.sum(axis=1)
    grad = np.empty_like(x)
    for i, law in enumerate(fleet.laws):
        grad[i] = 2.0 * law.Gcal @ (rowmass[i] * x[i] - weighted[i])
    return grad


@dataclass(frozen=True)
class EquilibriumReport:
    """Gap between each agent and its barycentric target at the tight plan."""

    residual: float
    per_agent: np.ndarray
    coupling: Coupling
    epsilon: float


def equilibrium_residual(
    x, scenario: FleetScenario, fleet: _Fleet | None = None
) -> EquilibriumReport:
    fleet = _fleet(scenario, fleet)
    x = np.asarray(x, dtype=float)
    P, _, u, v = tight_plan(scenario, x, fleet)
    tgt = (P @ scenario.targets) / scenario.marginals.a[:, None]
    per_agent = np.linalg.norm(x - tgt, axis=1)
    coupling = Coupling(
        P=P,
        scaling=ScalingPair(np.exp(u), np.exp(v)),
        kernel_epsilon=scenario.epsilon,
    )
    return EquilibriumReport(
        residual=float(per_agent.max()),
        per_agent=per_agent,
        coupling=coupling,
        epsilon=scenario.epsilon,
    )


@dataclass(frozen=True)
class EquilibriumAnchor:
    """A computed equilibrium: state, plan and scaling representative."""

    x: np.ndarray
    P: np.ndarray
    beta: np.ndarray


def find_equilibrium(
    scenario: FleetScenario,
    x_warm,
    fleet: _Fleet | None = None,
    damping: float = 0.5,
    tol: float = 1e-12,
    cap: int = FIXED_POINT_CAP,
) -> EquilibriumAnchor:
    """Damped fixed-point iteration x <- (1-w) x + w h(x).

    h maps a state to the barycentric targets of its converged plan;
    its fixed points are exactly the closed-loop equilibria.
    """
    fleet = _fleet(scenario, fleet)
    x = np.asarray(x_warm, dtype=float).copy()
    warm = None
    for _ in range(cap):
        P, _, u, v = tight_plan(scenario, x, fleet, warm=warm)
        warm = (u, v)
        h = (P @ scenario.targets) / scenario.marginals.a[:, None]
        x_new = (1.0 - damping) * x + damping * h
        delta = np.linalg.norm((x_new - x).ravel())
        x = x_new
        if delta < tol * (1.0 + np.linalg.norm(x.ravel())):
            P, _, u, v = tight_plan(scenario, x, fleet, warm=warm)
            return EquilibriumAnchor(x=x, P=P, beta=np.exp(v))
    raise NumericalError(
        f"equilibrium fixed-point iteration did not converge within {cap} sweeps"
    )


def lyapunov_V(
    x,
    beta,
    anchor: EquilibriumAnchor,
    scenario: FleetScenario,
    gamma: float = 1.0,
    fleet: _Fleet | None = None,
) -> float:
    """Quadratic distance to the anchor plan's targets plus a scaled
    Hilbert-metric term on the column scaling."""
    fleet = _fleet(scenario, fleet)
    x = np.asarray(x, dtype=float)
    tgt = (anchor.P @ scenario.targets) / scenario.marginals.a[:, None]
    total = 0.0
    for i, law in enumerate(fleet.laws):
        e = x[i] - tgt[i]
        total += float(e @ law.Gcal @ e)
    return total + gamma * hilbert_metric(beta, anchor.beta)


@dataclass(frozen=True)
class BoundReport:
    """Ultimate-bound constants per agent.

    bound_i = kappa_i rbar ||I - Abar_i|| / (1 - (rho_i + nu_i)); states
    settle below delta + bound_i once the transient kappa_i
    (rho_i+nu_i)^k ||x_i(0)|| has dropped below delta.
    """

    rho: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    bound: np.ndarray
    r_bar: float

    def settling_index(self, x0, delta: float) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        norms = np.linalg.norm(x0, axis=1)
        out = np.zeros(norms.size, dtype=int)
        for i, nrm in enumerate(norms):
            lead = self.kappa[i] * nrm
            if lead <= delta:
                out[i] = 0
            else:
                rate = self.rho[i] + self.nu[i]
                out[i] = int(np.ceil(np.log(delta / lead) / np.log(rate))) + 1
        return out


def _kappa(Abar: np.ndarray, rate: float, cap: int = 100_000) -> float:
    """Smallest kappa with ||Abar^k|| <= kappa rate^k for all k.

    Tracks the ratio until ||Abar^k0|| < rate^k0; past that point every
    later ratio is dominated geometrically by the running maximum.
    """
    kappa = 1.0
    M = np.eye(Abar.shape[0])
    scale = 1.0
    for _ in range(1, cap + 1):
        M = Abar @ M
        scale *= rate
        nrm = np.linalg.norm(M, 2)
        kappa = max(kappa, nrm / scale)
        if nrm < scale:
            return kappa
    raise NumericalError(
        f"norm/rate ratio did not enter geometric decay within {cap} powers"
    )


def ultimate_bound(
    scenario: FleetScenario, nu, fleet: _Fleet | None = None
) -> BoundReport:
    """Asymptotic norm bound for every agent under any hull-valued navigator."""
    fleet = _fleet(scenario, fleet)
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (scenario.N,)).copy()
    r_bar = float(np.linalg.norm(scenario.targets, axis=1).max())
    rho = np.empty(scenario.N)
    kappa = np.empty(scenario.N)
    bound = np.empty(scenario.N)
    for i, law in enumerate(fleet.laws):
        rho[i] = spectral_radius(law.Abar)
        if not nu[i] > 0 or rho[i] + nu[i] >= 1.0:
            raise ParameterError(
                f"margin nu[{i}] = {nu[i]!r} must satisfy 0 < nu, rho + nu < 1 "
                f"(rho = {rho[i]:.6g})"
            )
        kappa[i] = _kappa(law.Abar, rho[i] + nu[i])
        gap = np.linalg.norm(np.eye(law.Abar.shape[0]) - law.Abar, 2)
        bound[i] = kappa[i] * r_bar * gap / (1.0 - (rho[i] + nu[i]))
    return BoundReport(rho=rho, nu=nu, kappa=kappa, bound=bound, r_bar=r_bar)


def dual_objective(
    f, g, x, scenario: FleetScenario, fleet: _Fleet | None = None
) -> tuple[float, np.ndarray, np.ndarray]:
    """Dual value Q(f, g; x) and its gradients in f and g.

    Q = f'a + g'b - eps * (e^{f/eps})' K(x) e^{g/eps}; the scaling
    iteration is block coordinate ascent on Q.
    """
    fleet = _fleet(scenario, fleet)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    a, b = scenario.marginals.a, scenario.marginals.b
    if f.shape != a.shape or g.shape != b.shape:
        raise DimensionError("dual vector shapes do not match the marginals")
    eps = scenario.epsilon
    C = fleet.cost_matrix(np.asarray(x, dtype=float))
    with np.errstate(over="raise"):
        try:
            ef = np.exp(f / eps)
            eg = np.exp(g / eps)
            K = np.exp(-C / eps)
            Keg = K @ eg
            KTef = K.T @ ef
            value = float(f @ a + g @ b - eps * (ef @ Keg))
        except FloatingPointError as exc:
            raise NumericalError(f"dual evaluation overflowed: {exc}") from exc
    if not np.isfinite(value):
        raise NumericalError("dual evaluation produced a non-finite value")
    grad_f = a - ef * Keg
    grad_g = b - eg * KTef
    return value, grad_f, grad_g


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    steady: bool
    steps: int
    state: np.ndarray
    residual: float
    total_iterations: int
    first_iterations: int
    error: str | None = None


def epsilon_sweep(scenario: FleetScenario, eps_grid) -> list[SweepRow]:
    """One closed-loop run per epsilon, each until the fleet stops moving.

    Steady means the step-to-step fleet displacement stays below 1e-9
    for ten consecutive steps; the run is capped at step_count steps.
    Failures are recorded per row and the sweep continues.
    """
    eps_grid = [float(e) for e in eps_grid]
    if not eps_grid:
        raise ParameterError("epsilon grid is empty")
    if any(e <= 0 for e in eps_grid) or sorted(eps_grid) != eps_grid:
        raise ParameterError("epsilon grid must be positive and ascending")
    rows: list[SweepRow] = []
    for eps in eps_grid:
        sc = dataclasses.replace(
            scenario, epsilon=eps, log_diagnostics=False, snapshots="off"
        )
        try:
            fleet = _Fleet(sc)
            state = SimState(k=0, x=sc.x0.copy(), alpha=sc.initial_alpha())
            quiet = 0
            steady = False
            first_iters = 0
            total_iters = 0
            steps_used = 0
            for k in range(sc.step_count):
                prev = state.x
                state = step(sc, state, fleet)
                steps_used = k + 1
                iters = state.log[-1].iterations
                total_iters += iters
                if k == 0:
                    first_iters = iters
                if np.linalg.norm((state.x - prev).ravel()) < STEADY_MOTION_TOL:
                    quiet += 1
                    if quiet >= STEADY_RUN_LENGTH:
                        steady = True
                        break
                else:
                    quiet = 0
            report = equilibrium_residual(state.x, sc, fleet)
            rows.append(
                SweepRow(
                    epsilon=eps,
                    steady=steady,
                    steps=steps_used,
                    state=state.x.copy(),
                    residual=report.residual,
                    total_iterations=total_iters,
                    first_iterations=first_iters,
                )
            )
        except SinkhornMpcError as exc:
            rows.append(
                SweepRow(
                    epsilon=eps,
                    steady=False,
                    steps=0,
                    state=np.full_like(scenario.x0, np.nan),
                    residual=np.nan,
                    total_iterations=0,
                    first_iterations=0,
                    error=str(exc),
                )
            )
    return rows


@dataclass(frozen=True)
class DecayRow:
    epsilon: float
    converged: bool
    state_gap: float
    plan_gap: float


@dataclass(frozen=True)
class DecayReport:
    """Equilibrium gaps to a target permutation over a descending grid."""

    rows: list[DecayRow]
    slope: float  # of log(state gap) against 1/epsilon


def exponential_equilibrium_check(
    scenario: FleetScenario, sigma, eps_grid
) -> DecayReport:
    """Track the equilibrium near a permutation as epsilon shrinks.

    For each epsilon (descending) the equilibrium is located by the
    damped fixed-point iteration warm-started at the permuted targets,
    and the gaps to the permuted targets and the permutation plan are
    recorded. The fitted slope of log gap against 1/epsilon is negative
    when the decay is exponential.
    """
    sigma = np.asarray(sigma, dtype=int)
    N = scenario.N
    if N > 6:
        raise SizeCapError(f"equilibrium decay check capped at N <= 6, got {N}")
    if sorted(sigma.tolist()) != list(range(N)):
        raise ParameterError("sigma must be a permutation of range(N)")
    T = scenario.targets
    for i in range(N):
        for j in range(i + 1, N):
            if np.allclose(T[i], T[j]):
                raise ParameterError(f"targets {i} and {j} coincide")
    for i, s in enumerate(scenario.systems):
        if abs(np.linalg.det(s.A)) < 1e-12:
            raise ParameterError(f"A of agent {i} is singular")
    eps_grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps_grid) or sorted(eps_grid, reverse=True) != eps_grid:
        raise ParameterError("epsilon grid must be positive and descending")

    x_sigma = T[sigma]
    P_sigma = np.zeros((N, N))
    P_sigma[np.arange(N), sigma] = 1.0 / N
    rows: list[DecayRow] = []
    for eps in eps_grid:
        sc = dataclasses.replace(scenario, epsilon=eps)
        try:
            anchor = find_equilibrium(sc, x_sigma)
            rows.append(
                DecayRow(
                    epsilon=eps,
                    converged=True,
                    state_gap=float(np.linalg.norm((anchor.x - x_sigma).ravel())),
                    plan_gap=float(np.abs(anchor.P - P_sigma).max()),
                )
            )
        except SinkhornMpcError:
            rows.append(
                DecayRow(epsilon=eps, converged=False, state_gap=np.nan, plan_gap=np.nan)
            )
    good = [r for r in rows if r.converged]
    if len(good) >= 2:
        xs = np.array([1.0 / r.epsilon for r in good])
        ys = np.log(np.maximum([r.state_gap for r in good], 1e-300))
        slope = float(np.polyfit(xs, ys, 1)[0])
    else:
        slope = np.nan
    return DecayReport(rows=rows, slope=slope)
