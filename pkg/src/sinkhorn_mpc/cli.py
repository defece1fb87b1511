"""Command-line front end: scenario files, runs, sweeps and benchmarks.

Scenario files are single JSON documents with an explicit schema
version; parsing then re-serializing the canonical form is idempotent.
Outputs are CSV files with fixed headers (17-significant-digit floats)
plus a summary.json per run. Exit codes: 0 ok, 2 input error, 3
numerical abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .assignment import hungarian
from .errors import NumericalError, ScenarioError, SimulationAbortError
from .mpc import LinearSystem, discretize_euler
from .otcore import (
    FixedCount,
    Marginals,
    MarginalTolerance,
    gibbs_kernel,
    sinkhorn_solve,
)
from .analysis import epsilon_sweep, equilibrium_residual
from .simulator import FleetScenario, _Fleet, run, run_baseline_fixed, run_baseline_permutation

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"

TRAJECTORY_BASE_COLUMNS = ("step", "agent")
METRICS_HEADER = (
    "step,iterations,marginal_violation,entropic_cost,equilibrium_residual,"
    "raw_energy,deviation_energy,assignment_changed"
)


# ---------------------------------------------------------------- scenario IO


@dataclass
class ScenarioFile:
    """Declarative mirror of FleetScenario plus generation/IO policy."""

    name: str
    seed: int
    dynamics: dict
    agents: int
    horizon: int
    epsilon: float
    targets: dict
    initial_states: dict
    marginals: dict
    sinkhorn: dict
    steps: int
    schema_version: int = SCHEMA_VERSION
    alpha0: dict | None = None
    navigator: str = "barycentric"
    snapshots: str = "auto"
    log_diagnostics: bool = True
    eps_grid: list | None = None


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ScenarioError(message, field=field)


def _check_matrix(value, field: str) -> list:
    _require(isinstance(value, list) and value, field, "must be a non-empty matrix")
    width = None
    for row in value:
        _require(isinstance(row, list) and row, field, "must be a matrix of numbers")
        width = len(row) if width is None else width
        _require(len(row) == width, field, "rows must have equal length")
        for x in row:
            _require(isinstance(x, (int, float)) and np.isfinite(x), field,
                     "entries must be finite numbers")
    return value


def parse_scenario(text: str) -> ScenarioFile:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}") from exc
    _require(isinstance(raw, dict), "", "scenario must be a JSON object")
    known = {f.name for f in dataclasses.fields(ScenarioFile)}
    for key in raw:
        _require(key in known, key, "unknown field")
    for req in ("name", "seed", "dynamics", "agents", "horizon", "epsilon",
                "targets", "initial_states", "marginals", "sinkhorn", "steps"):
        _require(req in raw, req, "missing required field")
    sf = ScenarioFile(**raw)

    _require(sf.schema_version == SCHEMA_VERSION, "schema_version",
             f"unsupported version {sf.schema_version} (expected {SCHEMA_VERSION})")
    _require(isinstance(sf.seed, int), "seed", "must be an integer")
    _require(isinstance(sf.agents, int) and sf.agents >= 1, "agents", "must be >= 1")
    _require(isinstance(sf.horizon, int) and sf.horizon >= 1, "horizon", "must be >= 1")
    _require(isinstance(sf.epsilon, (int, float)) and sf.epsilon > 0, "epsilon",
             f"must be positive, got {sf.epsilon!r}")
    _require(isinstance(sf.steps, int) and sf.steps >= 0, "steps", "must be >= 0")
    _require(sf.snapshots in ("auto", "on", "off"), "snapshots",
             "must be auto, on or off")
    _require(sf.navigator == "barycentric", "navigator",
             f"unknown navigator {sf.navigator!r}")

    dyn = sf.dynamics
    _require(isinstance(dyn, dict), "dynamics", "must be an object")
    kind = dyn.get("kind")
    _require(kind in ("continuous", "discrete"), "dynamics.kind",
             "must be continuous or discrete")
    A = _check_matrix(dyn.get("A"), "dynamics.A")
    B = _check_matrix(dyn.get("B"), "dynamics.B")
    _require(len(A) == len(A[0]), "dynamics.A", "must be square")
    _require(len(B) == len(A), "dynamics.B", "row count must match A")
    if kind == "continuous":
        h = dyn.get("euler_step")
        _require(isinstance(h, (int, float)) and h > 0, "dynamics.euler_step",
                 "must be a positive step size")

    n = len(A)
    for field, gen in (("targets", sf.targets), ("initial_states", sf.initial_states)):
        _require(isinstance(gen, dict), field, "must be an object")
        gkind = gen.get("kind")
        _require(gkind in ("box", "explicit"), f"{field}.kind",
                 "must be box or explicit")
        if gkind == "box":
            low, high = gen.get("low"), gen.get("high")
            for side, v in (("low", low), ("high", high)):
                _require(isinstance(v, list) and len(v) == n, f"{field}.{side}",
                         f"must be a length-{n} vector")
            _require(all(lo < hi for lo, hi in zip(low, high)), field,
                     "box must have low < high componentwise")
            if "count" in gen:
                _require(isinstance(gen["count"], int) and gen["count"] >= 1,
                         f"{field}.count", "must be >= 1")
        else:
            pts = gen.get("points")
            _require(isinstance(pts, list) and pts, f"{field}.points",
                     "must be a non-empty list of points")
            for p in pts:
                _require(isinstance(p, list) and len(p) == n, f"{field}.points",
                         f"each point must have dimension {n}")

    marg = sf.marginals
    _require(isinstance(marg, dict) and marg.get("kind") in ("uniform", "explicit"),
             "marginals.kind", "must be uniform or explicit")
    if marg.get("kind") == "explicit":
        _require(isinstance(marg.get("a"), list) and isinstance(marg.get("b"), list),
                 "marginals", "explicit marginals need vectors a and b")

    sk = sf.sinkhorn
    _require(isinstance(sk, dict) and sk.get("kind") in ("tolerance", "fixed"),
             "sinkhorn.kind", "must be tolerance or fixed")
    if sk.get("kind") == "tolerance":
        _require(isinstance(sk.get("theta"), (int, float)) and sk["theta"] > 0,
                 "sinkhorn.theta", "must be positive")
        cap = sk.get("cap", 10_000)
        _require(isinstance(cap, int) and cap >= 1, "sinkhorn.cap", "must be >= 1")
    else:
        _require(isinstance(sk.get("count"), int) and sk["count"] >= 1,
                 "sinkhorn.count", "must be >= 1")

    if sf.alpha0 is not None:
        _require(isinstance(sf.alpha0, dict) and sf.alpha0.get("kind") in
                 ("ones", "explicit"), "alpha0.kind", "must be ones or explicit")
    if sf.eps_grid is not None:
        _require(isinstance(sf.eps_grid, list) and
                 all(isinstance(e, (int, float)) and e > 0 for e in sf.eps_grid),
                 "eps_grid", "must be a list of positive numbers")
    return sf


def canonical_json(sf: ScenarioFile) -> str:
    doc = dataclasses.asdict(sf)
    if doc["alpha0"] is None:
        doc["alpha0"] = {"kind": "ones"}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def load_scenario(path_or_name: str) -> ScenarioFile:
    """Load from a filesystem path or from the shipped scenario library."""
    p = Path(path_or_name)
    if p.exists():
        return parse_scenario(p.read_text())
    pkg = resources.files("sinkhorn_mpc").joinpath(f"scenarios/{path_or_name}.json")
    if pkg.is_file():
        return parse_scenario(pkg.read_text())
    raise ScenarioError(f"scenario not found: {path_or_name!r}", field="scenario")


def _draw(gen: dict, n: int, default_count: int, rng: np.random.Generator) -> np.ndarray:
    if gen["kind"] == "explicit":
        return np.asarray(gen["points"], dtype=float)
    count = gen.get("count", default_count)
    low = np.asarray(gen["low"], dtype=float)
    high = np.asarray(gen["high"], dtype=float)
    return rng.uniform(low, high, (count, n))


def materialize(
    sf: ScenarioFile,
    seed: int | None = None,
    agents: int | None = None,
    snapshots: str | None = None,
) -> FleetScenario:
    """Turn the declarative record into a runnable FleetScenario."""
    seed = sf.seed if seed is None else seed
    N = sf.agents if agents is None else agents
    if agents is not None:
        if sf.targets["kind"] != "box" or sf.initial_states["kind"] != "box":
            raise ScenarioError(
                "only box-generated scenarios can be scaled in N", field="agents"
            )
    dyn = sf.dynamics
    base = LinearSystem(
        A=np.asarray(dyn["A"], dtype=float),
        B=np.asarray(dyn["B"], dtype=float),
        flavor=dyn["kind"],
    )
    system = discretize_euler(base, float(dyn["euler_step"])) if dyn["kind"] == "continuous" else base
    n = system.n

    targets = _draw(sf.targets, n, N, np.random.default_rng([seed, 0]))
    x0 = _draw(sf.initial_states, n, N, np.random.default_rng([seed, 1]))
    if sf.initial_states["kind"] == "box":
        x0 = x0[:N] if x0.shape[0] >= N else x0
    if x0.shape[0] != N:
        raise ScenarioError(
            f"initial_states provide {x0.shape[0]} points for {N} agents",
            field="initial_states",
        )

    if sf.marginals["kind"] == "uniform":
        marginals = Marginals.uniform(N, targets.shape[0])
    else:
        marginals = Marginals(
            np.asarray(sf.marginals["a"], dtype=float),
            np.asarray(sf.marginals["b"], dtype=float),
        )

    if sf.sinkhorn["kind"] == "tolerance":
        schedule = MarginalTolerance(
            theta=float(sf.sinkhorn["theta"]), cap=int(sf.sinkhorn.get("cap", 10_000))
        )
    else:
        schedule = FixedCount(int(sf.sinkhorn["count"]))

    alpha0 = None
    if sf.alpha0 is not None and sf.alpha0.get("kind") == "explicit":
        alpha0 = np.asarray(sf.alpha0["values"], dtype=float)

    return FleetScenario(
        systems=(system,) * N,
        x0=x0,
        targets=targets,
        marginals=marginals,
        epsilon=float(sf.epsilon),
        tau_h=int(sf.horizon),
        schedule=schedule,
        step_count=int(sf.steps),
        alpha0=alpha0,
        navigator=sf.navigator,
        snapshots=sf.snapshots if snapshots is None else snapshots,
        log_diagnostics=bool(sf.log_diagnostics),
    )


# ------------------------------------------------------------------- writers


def _fmt(x) -> str:
    return FLOAT_FMT % float(x)


def write_trajectories(path: Path, log) -> None:
    T, N, n = log.targets.shape
    m = log.inputs.shape[2]
    header = (
        list(TRAJECTORY_BASE_COLUMNS)
        + [f"x{d + 1}" for d in range(n)]
        + [f"u{d + 1}" for d in range(m)]
        + [f"t{d + 1}" for d in range(n)]
    )
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(T):
            for i in range(N):
                row = (
                    [str(k), str(i)]
                    + [_fmt(v) for v in log.states[k, i]]
                    + [_fmt(v) for v in log.inputs[k, i]]
                    + [_fmt(v) for v in log.targets[k, i]]
                )
                fh.write(",".join(row) + "\n")


def write_metrics(path: Path, log) -> None:
    with path.open("w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for k in range(log.step_count):
            row = [
                str(k),
                str(int(log.iterations[k])),
                _fmt(log.violations[k]),
                _fmt(log.entropic_cost[k]),
                _fmt(log.residuals[k]),
                _fmt(log.raw_energy[k]),
                _fmt(log.deviation_energy[k]),
                str(int(log.assignment_changed[k])),
            ]
            fh.write(",".join(row) + "\n")


def write_sweep(path: Path, rows, N: int, n: int) -> None:
    header = ["epsilon", "steady", "steps", "residual", "total_iterations",
              "first_iterations", "error"]
    header += [f"s_{i + 1}_{d + 1}" for i in range(N) for d in range(n)]
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            row = [
                _fmt(r.epsilon),
                str(int(r.steady)),
                str(r.steps),
                _fmt(r.residual),
                str(r.total_iterations),
                str(r.first_iterations),
                '"' + (r.error or "").replace('"', "'") + '"',
            ]
            row += [_fmt(v) for v in np.asarray(r.state).ravel()]
            fh.write(",".join(row) + "\n")


# ------------------------------------------------------------------ commands


def cmd_run(args) -> int:
    sf = load_scenario(args.scenario)
    scenario = materialize(sf, seed=args.seed, snapshots=args.snapshots)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runner = {
        "sinkhorn": run,
        "hungarian-baseline": run_baseline_permutation,
        "fixed-baseline": run_baseline_fixed,
    }[args.mode]
    log = runner(scenario)
    write_trajectories(out / "trajectories.csv", log)
    write_metrics(out / "metrics.csv", log)

    final = equilibrium_residual(log.final_state, scenario)
    per_iter = (
        log.sinkhorn_seconds / log.total_iterations if log.total_iterations else None
    )
    hungarian_median = (
        float(np.median(log.hungarian_seconds)) if log.hungarian_seconds else None
    )
    summary = {
        "scenario": sf.name,
        "mode": args.mode,
        "seed": sf.seed if args.seed is None else args.seed,
        "steps": log.step_count,
        "total_raw_energy": float(log.raw_energy.sum()),
        "total_deviation_energy": float(log.deviation_energy.sum()),
        "final_equilibrium_residual": final.residual,
        "first_iterations": int(log.iterations[0]) if log.step_count else 0,
        "total_iterations": log.total_iterations,
        "per_step_series": "metrics.csv",
        "sinkhorn_seconds_per_iteration": per_iter,
        "hungarian_seconds_median": hungarian_median,
        "warning_count": len(log.warnings),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {out}/trajectories.csv, metrics.csv, summary.json")
    return 0


def cmd_sweep(args) -> int:
    sf = load_scenario(args.scenario)
    if args.eps:
        grid = [float(e) for e in args.eps.split(",") if e]
    else:
        grid = list(sf.eps_grid or [])
    if not grid:
        raise ScenarioError("no epsilon grid given (use --eps or eps_grid)", field="eps")
    scenario = materialize(sf, seed=args.seed)
    rows = epsilon_sweep(scenario, sorted(grid))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep(out / "sweep.csv", rows, scenario.N, scenario.x0.shape[1])
    print(f"wrote {out}/sweep.csv ({len(rows)} rows)")
    return 0


def cmd_bench(args) -> int:
    sf = load_scenario(args.scenario)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    eps_list = [float(e) for e in args.eps.split(",") if e]
    if not sizes or not eps_list:
        raise ScenarioError("bench needs --sizes and --eps lists", field="bench")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["agents,epsilon,sinkhorn_iteration_seconds,sbar0,hungarian_seconds"]
    for N in sizes:
        scenario = materialize(sf, seed=args.seed, agents=N)
        fleet = _Fleet(scenario)
        C = fleet.cost_matrix(scenario.x0)
        t0 = time.perf_counter()
        hungarian(C)
        hungarian_seconds = time.perf_counter() - t0
        for eps in eps_list:
            kernel = gibbs_kernel(C, eps)
            m = scenario.marginals
            _, sbar0 = sinkhorn_solve(
                kernel, m, np.ones(N), MarginalTolerance(theta=0.005, cap=200_000)
            )
            alpha = np.ones(N)
            K = kernel.K
            t = K.T @ alpha
            samples = []
            for it in range(18):
                t0 = time.perf_counter()
                beta = m.b / t
                alpha = m.a / (K @ beta)
                t = K.T @ alpha
                if it >= 3:  # discard warm-up
                    samples.append(time.perf_counter() - t0)
            lines.append(
                f"{N},{_fmt(eps)},{_fmt(np.median(samples))},{sbar0},"
                f"{_fmt(hungarian_seconds)}"
            )
    (out / "bench.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out}/bench.csv")
    return 0


def cmd_validate(args) -> int:
    sf = load_scenario(args.scenario)
    sys.stdout.write(canonical_json(sf))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinkhorn-mpc",
        description="Closed-loop transport of linear agents with online "
        "entropic-assignment MPC.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write CSV logs")
    p_run.add_argument("--scenario", required=True, help="path or shipped name")
    p_run.add_argument(
        "--mode",
        choices=("sinkhorn", "hungarian-baseline", "fixed-baseline"),
        default="sinkhorn",
    )
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--snapshots", choices=("auto", "on", "off"), default=None)
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="steady states over an epsilon grid")
    p_sweep.add_argument("--scenario", required=True)
    p_sweep.add_argument("--eps", default="", help="comma-separated epsilons")
    p_sweep.add_argument("--out", default="out")
    p_sweep.add_argument("--seed", type=int, default=None)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_bench = sub.add_parser("bench", help="iteration timing vs exact assignment")
    p_bench.add_argument("--scenario", required=True)
    p_bench.add_argument("--sizes", required=True, help="comma-separated agent counts")
    p_bench.add_argument("--eps", required=True, help="comma-separated epsilons")
    p_bench.add_argument("--out", default="out")
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.set_defaults(fn=cmd_bench)

    p_val = sub.add_parser("validate", help="check a scenario file and echo it")
    p_val.add_argument("--scenario", required=True)
    p_val.set_defaults(fn=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SimulationAbortError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
