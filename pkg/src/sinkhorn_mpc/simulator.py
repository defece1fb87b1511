"""Closed-loop simulation: entropic-assignment MPC and exact baselines.

Each step rebuilds the Gibbs kernel at the current fleet state from the
per-agent horizon costs, advances the diagonal-scaling iteration from
the scaling vector carried over from the previous step, maps the
resulting plan to temporary targets, and applies one MPC input per
agent. Baselines replace the plan with an exact assignment (recomputed
every step, or frozen at the initial state).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assignment import hungarian
from .errors import (
    DimensionError,
    ParameterError,
    SimulationAbortError,
    SingularInputError,
    SinkhornMpcError,
    SinkhornNonConvergenceError,
)
from .mpc import LinearSystem, build_mpc_law, mpc_control
from .navigator import barycentric_targets
from .otcore import (
    Coupling,
    GibbsKernel,
    Marginals,
    StoppingPolicy,
    _refine_coupling,
    gibbs_kernel,
    marginal_violation,
    sinkhorn_solve,
)

SNAPSHOT_SIZE_LIMIT = 64
DIAGNOSTIC_THETA = 1e-10

NavigatorFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FleetScenario:
    """Everything needed to run one closed loop, immutable."""

    systems: tuple[LinearSystem, ...]
    x0: np.ndarray
    targets: np.ndarray
    marginals: Marginals
    epsilon: float
    tau_h: int
    schedule: StoppingPolicy
    step_count: int
    alpha0: np.ndarray | None = None
    navigator: str | NavigatorFn = "barycentric"
    snapshots: str = "auto"  # "auto" | "on" | "off"
    log_diagnostics: bool = True

    def __post_init__(self):
        systems = tuple(self.systems)
        x0 = np.asarray(self.x0, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        object.__setattr__(self, "systems", systems)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "targets", targets)
        N = len(systems)
        if N == 0:
            raise ParameterError("scenario needs at least one agent")
        n = systems[0].n
        if any(s.flavor != "discrete" for s in systems):
            raise ParameterError("simulation runs on discrete systems; discretize first")
        if any(s.n != n for s in systems):
            raise DimensionError("all agents must share the state dimension")
        if x0.shape != (N, n):
            raise DimensionError(f"x0 shape {x0.shape}, expected ({N}, {n})")
        if targets.ndim != 2 or targets.shape[1] != n:
            raise DimensionError(f"targets shape {targets.shape}, expected (M, {n})")
        if self.marginals.a.size != N or self.marginals.b.size != targets.shape[0]:
            raise DimensionError("marginals do not match the fleet/target counts")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.step_count < 0:
            raise ParameterError(f"step count must be >= 0, got {self.step_count}")
        if self.alpha0 is not None:
            a0 = np.asarray(self.alpha0, dtype=float)
            if a0.shape != (N,):
                raise DimensionError(f"alpha0 shape {a0.shape}, expected ({N},)")
            if np.any(a0 <= 0) or not np.all(np.isfinite(a0)):
                raise ParameterError("alpha0 must be strictly positive and finite")
            object.__setattr__(self, "alpha0", a0)
        if self.snapshots not in ("auto", "on", "off"):
            raise ParameterError(f"snapshots must be auto/on/off, got {self.snapshots!r}")

    @property
    def N(self) -> int:
        return len(self.systems)

    @property
    def M(self) -> int:
        return self.targets.shape[0]

    def initial_alpha(self) -> np.ndarray:
        if self.alpha0 is None:
            return np.ones(self.N)
        return self.alpha0.copy()

    def navigator_fn(self) -> NavigatorFn:
        if callable(self.navigator):
            return self.navigator
        if self.navigator == "barycentric":
            return barycentric_targets
        raise ParameterError(f"unknown navigator {self.navigator!r}")

    def store_snapshots(self) -> bool:
        if self.snapshots == "on":
            return True
        if self.snapshots == "off":
            return False
        return max(self.N, self.M) <= SNAPSHOT_SIZE_LIMIT


@dataclass
class SimState:
    """Mutable per-run state: step index, fleet state, warm-start scaling."""

    k: int
    x: np.ndarray
    alpha: np.ndarray
    last_coupling: Coupling | None = None
    log: list = field(default_factory=list)
    diag_u: np.ndarray | None = None
    diag_v: np.ndarray | None = None
    prev_sigma: np.ndarray | None = None


@dataclass
class StepRecord:
    state: np.ndarray
    input: np.ndarray
    targets: np.ndarray
    iterations: int
    violation: float
    raw_energy: float
    deviation_energy: float
    entropic_cost: float
    residual: float
    sinkhorn_seconds: float
    coupling: Coupling | None = None
    assignment: np.ndarray | None = None
    assignment_changed: bool = False
    warning: str | None = None


@dataclass
class TrajectoryLog:
    """Per-step records stacked into arrays; states include the final one."""

    states: np.ndarray
    inputs: np.ndarray
    targets: np.ndarray
    iterations: np.ndarray
    violations: np.ndarray
    raw_energy: np.ndarray
    deviation_energy: np.ndarray
    entropic_cost: np.ndarray
    residuals: np.ndarray
    assignment_changed: np.ndarray
    couplings: list[Coupling] | None
    assignments: np.ndarray | None
    warnings: list[tuple[int, str]]
    sinkhorn_seconds: float
    total_iterations: int
    hungarian_seconds: list[float]

    @property
    def step_count(self) -> int:
        return self.inputs.shape[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


class _Fleet:
    """Laws and vectorization hints compiled from a scenario."""

    def __init__(self, scenario: FleetScenario):
        self.scenario = scenario
        first = scenario.systems[0]
        self.homogeneous = all(
            s is first or (np.array_equal(s.A, first.A) and np.array_equal(s.B, first.B))
            for s in scenario.systems
        )
        if self.homogeneous:
            law = build_mpc_law(first, scenario.tau_h)
            self.laws = [law] * scenario.N
        else:
            self.laws = [build_mpc_law(s, scenario.tau_h) for s in scenario.systems]
        if any(law.Binv is None for law in self.laws):
            raise SingularInputError(
                "closed-loop control needs an invertible input matrix per agent"
            )

    def cost_matrix(self, x: np.ndarray) -> np.ndarray:
        """C_ij = (x_i - target_j)' Gcal_i (x_i - target_j)."""
        T = self.scenario.targets
        if self.homogeneous:
            Gc = self.laws[0].Gcal
            XG = x @ Gc
            TG = T @ Gc
            C = (XG * x).sum(1)[:, None] + (TG * T).sum(1)[None, :] - 2.0 * (XG @ T.T)
            return np.maximum(C, 0.0)
        rows = []
        for i, law in enumerate(self.laws):
            D = x[i][None, :] - T
            rows.append(np.einsum("jk,kl,jl->j", D, law.Gcal, D))
        return np.maximum(np.array(rows), 0.0)

    def control(self, x: np.ndarray, xhat: np.ndarray) -> np.ndarray:
        if self.homogeneous:
            law = self.laws[0]
            ff = (xhat - xhat @ law.A.T) @ law.Binv.T
            return -(x - xhat) @ law.gain.T + ff
        return np.array(
            [
                mpc_control(law, sys, x[i], xhat[i])
                for i, (law, sys) in enumerate(zip(self.laws, self.scenario.systems))
            ]
        )

    def advance(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        if self.homogeneous:
            law = self.laws[0]
            return x @ law.A.T + u @ law.B.T
        return np.array(
            [s.A @ x[i] + s.B @ u[i] for i, s in enumerate(self.scenario.systems)]
        )

    def holding_inputs(self, xhat: np.ndarray) -> np.ndarray:
        if self.homogeneous:
            law = self.laws[0]
            return (xhat - xhat @ law.A.T) @ law.Binv.T
        return np.array([law.feedforward(xhat[i]) for i, law in enumerate(self.laws)])


def compile_fleet(scenario: FleetScenario) -> _Fleet:
    return _Fleet(scenario)


def kernel_at(scenario: FleetScenario, x, fleet: _Fleet | None = None) -> GibbsKernel:
    """Gibbs kernel of the per-agent horizon costs at fleet state x."""
    fleet = fleet or _Fleet(scenario)
    C = fleet.cost_matrix(np.asarray(x, dtype=float))
    return gibbs_kernel(C, scenario.epsilon)


def _diagnostics(scenario, fleet, C, x, state):
    """Tight plan at the current state: entropic cost and residual."""
    logK = -C / scenario.epsilon
    m = scenario.marginals
    if state.diag_u is None:
        state.diag_u = np.zeros(scenario.N)
        state.diag_v = np.zeros(scenario.M)
        warm = 500
    else:
        warm = 60
    warning = None
    try:
        u, v, P, _ = _refine_coupling(
            logK, m, state.diag_u, state.diag_v, theta=DIAGNOSTIC_THETA,
            sinkhorn_iters=warm,
        )
    except SinkhornNonConvergenceError as exc:
        P = exc.best.P
        u = np.log(exc.best.scaling.alpha)
        v = np.log(exc.best.scaling.beta)
        warning = f"diagnostic refinement stalled at violation {exc.violation:.2e}"
    state.diag_u, state.diag_v = u, v
    with np.errstate(divide="ignore", invalid="ignore"):
        logP = np.where(P > 0, np.log(np.where(P > 0, P, 1.0)), 0.0)
    H = -float(np.sum(P * (logP - 1.0)))
    E = float((C * P).sum()) - scenario.epsilon * H
    tgt = (P @ scenario.targets) / m.a[:, None]
    residual = float(np.linalg.norm(x - tgt, axis=1).max())
    return E, residual, warning


def _plan_sinkhorn(scenario, fleet, state, C):
    """Schedule-driven scaling iterations from the carried alpha."""
    kernel = gibbs_kernel(C, scenario.epsilon)
    warning = None
    t0 = time.perf_counter()
    try:
        coupling, iters = sinkhorn_solve(
            kernel, scenario.marginals, state.alpha, scenario.schedule
        )
    except SinkhornNonConvergenceError as exc:
        coupling = exc.best
        iters = exc.iterations
        warning = (
            f"iteration cap hit (violation {exc.violation:.2e}); "
            "continuing with best coupling"
        )
    seconds = time.perf_counter() - t0
    return coupling, iters, seconds, warning


def step(scenario: FleetScenario, state: SimState, fleet: _Fleet | None = None) -> SimState:
    """One closed-loop step; appends a StepRecord to state.log."""
    fleet = fleet or _Fleet(scenario)
    nav = scenario.navigator_fn()
    m = scenario.marginals
    x = state.x
    C = fleet.cost_matrix(x)

    coupling, iters, seconds, warning = _plan_sinkhorn(scenario, fleet, state, C)
    violation = marginal_violation(coupling, m)
    xhat = nav(coupling.P, scenario.targets, m.a)

    if scenario.log_diagnostics:
        E, residual, diag_warning = _diagnostics(scenario, fleet, C, x, state)
        warning = warning or diag_warning
    else:
        E, residual = np.nan, np.nan

    u = fleet.control(x, xhat)
    ubar = fleet.holding_inputs(xhat)
    x_next = fleet.advance(x, u)
    if not np.all(np.isfinite(x_next)):
        raise SimulationAbortError(state.k, ParameterError("state became non-finite"))

    record = StepRecord(
        state=x.copy(),
        input=u,
        targets=xhat,
        iterations=iters,
        violation=violation,
        raw_energy=float((u * u).sum()),
        deviation_energy=float(((u - ubar) ** 2).sum()),
        entropic_cost=E,
        residual=residual,
        sinkhorn_seconds=seconds,
        coupling=coupling if scenario.store_snapshots() else None,
        warning=warning,
    )
    state.log.append(record)
    return SimState(
        k=state.k + 1,
        x=x_next,
        alpha=coupling.scaling.alpha,
        last_coupling=coupling,
        log=state.log,
        diag_u=state.diag_u,
        diag_v=state.diag_v,
    )


def _baseline_step(scenario, fleet, state, fixed_sigma, hung_seconds):
    nav_targets = scenario.targets
    x = state.x
    C = fleet.cost_matrix(x)
    if fixed_sigma is None:
        t0 = time.perf_counter()
        sigma = hungarian(C).sigma
        hung_seconds.append(time.perf_counter() - t0)
    else:
        sigma = fixed_sigma
    changed = state.prev_sigma is not None and not np.array_equal(sigma, state.prev_sigma)
    xhat = nav_targets[sigma]

    if scenario.log_diagnostics:
        E, residual, warning = _diagnostics(scenario, fleet, C, x, state)
    else:
        E, residual, warning = np.nan, np.nan, None

    u = fleet.control(x, xhat)
    ubar = fleet.holding_inputs(xhat)
    x_next = fleet.advance(x, u)
    if not np.all(np.isfinite(x_next)):
        raise SimulationAbortError(state.k, ParameterError("state became non-finite"))

    record = StepRecord(
        state=x.copy(),
        input=u,
        targets=xhat,
        iterations=0,
        violation=np.nan,
        raw_energy=float((u * u).sum()),
        deviation_energy=float(((u - ubar) ** 2).sum()),
        entropic_cost=E,
        residual=residual,
        sinkhorn_seconds=0.0,
        assignment=sigma.copy(),
        assignment_changed=bool(changed),
        warning=warning,
    )
    state.log.append(record)
    new = SimState(
        k=state.k + 1,
        x=x_next,
        alpha=state.alpha,
        last_coupling=None,
        log=state.log,
        diag_u=state.diag_u,
        diag_v=state.diag_v,
        prev_sigma=sigma,
    )
    return new, sigma


def _collect(scenario, state, hung_seconds) -> TrajectoryLog:
    records: Sequence[StepRecord] = state.log
    T = len(records)
    n = scenario.x0.shape[1]
    m_inputs = scenario.systems[0].m
    states = np.empty((T + 1, scenario.N, n))
    for k, r in enumerate(records):
        states[k] = r.state
    states[T] = state.x
    stack = lambda attr, shape: (
        np.array([getattr(r, attr) for r in records]).reshape((T,) + shape)
        if T
        else np.empty((0,) + shape)
    )
    couplings = None
    if scenario.store_snapshots() and T and records[0].coupling is not None:
        couplings = [r.coupling for r in records]
    assignments = None
    if T and records[0].assignment is not None:
        assignments = np.array([r.assignment for r in records])
    warnings_list = [(k, r.warning) for k, r in enumerate(records) if r.warning]
    return TrajectoryLog(
        states=states,
        inputs=stack("input", (scenario.N, m_inputs)),
        targets=stack("targets", (scenario.N, n)),
        iterations=np.array([r.iterations for r in records], dtype=int),
        violations=np.array([r.violation for r in records]),
        raw_energy=np.array([r.raw_energy for r in records]),
        deviation_energy=np.array([r.deviation_energy for r in records]),
        entropic_cost=np.array([r.entropic_cost for r in records]),
        residuals=np.array([r.residual for r in records]),
        assignment_changed=np.array(
            [r.assignment_changed for r in records], dtype=bool
        ),
        couplings=couplings,
        assignments=assignments,
        warnings=warnings_list,
        sinkhorn_seconds=float(sum(r.sinkhorn_seconds for r in records)),
        total_iterations=int(sum(r.iterations for r in records)),
        hungarian_seconds=hung_seconds,
    )


def run(scenario: FleetScenario) -> TrajectoryLog:
    """Run the entropic-assignment closed loop for step_count steps."""
    fleet = _Fleet(scenario)
    state = SimState(k=0, x=scenario.x0.copy(), alpha=scenario.initial_alpha())
    for k in range(scenario.step_count):
        try:
            state = step(scenario, state, fleet)
        except SimulationAbortError:
            raise
        except SinkhornMpcError as exc:
            raise SimulationAbortError(k, exc) from exc
    return _collect(scenario, state, [])


def _run_baseline(scenario: FleetScenario, fixed: bool) -> TrajectoryLog:
    if scenario.N != scenario.M:
        raise ParameterError("assignment baselines need as many targets as agents")
    if not np.allclose(scenario.marginals.a, 1.0 / scenario.N) or not np.allclose(
        scenario.marginals.b, 1.0 / scenario.N
    ):
        raise ParameterError("assignment baselines need uniform marginals")
    fleet = _Fleet(scenario)
    state = SimState(k=0, x=scenario.x0.copy(), alpha=scenario.initial_alpha())
    hung_seconds: list[float] = []
    fixed_sigma = None
    if fixed and scenario.step_count > 0:
        t0 = time.perf_counter()
        fixed_sigma = hungarian(fleet.cost_matrix(state.x)).sigma
        hung_seconds.append(time.perf_counter() - t0)
    for k in range(scenario.step_count):
        try:
            state, sigma = _baseline_step(scenario, fleet, state, fixed_sigma, hung_seconds)
        except SimulationAbortError:
            raise
        except SinkhornMpcError as exc:
            raise SimulationAbortError(k, exc) from exc
    return _collect(scenario, state, hung_seconds)


def run_baseline_permutation(scenario: FleetScenario) -> TrajectoryLog:
    """Exact assignment recomputed every step (state-dependent permutation)."""
    return _run_baseline(scenario, fixed=False)


def run_baseline_fixed(scenario: FleetScenario) -> TrajectoryLog:
    """Assignment computed once at the initial state and held."""
    return _run_baseline(scenario, fixed=True)
