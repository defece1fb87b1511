"""Figure rendering from run CSV outputs.

Four kinds: agent trajectories, per-step iteration counts (semi-log),
steady states over the regularization grid (semi-log), and the timing
benchmark table. Rendering is deterministic under the pinned style:
identical inputs give byte-identical image files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

KINDS = ("trajectories", "iterations", "sweep", "bench")

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.0,
}


class RenderInputError(ValueError):
    """The input file is missing, empty, or lacks a required column."""


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: kind, input CSV paths, and marker toggles."""

    kind: str
    inputs: tuple
    markers: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RenderInputError(
                f"unknown figure kind {self.kind!r}; expected one of {KINDS}"
            )
        object.__setattr__(self, "inputs", tuple(Path(p) for p in self.inputs))
        if not self.inputs:
            raise RenderInputError("at least one input file is required")


def _load(path: Path, required: tuple[str, ...]) -> pd.DataFrame:
    if not path.exists():
        raise RenderInputError(f"input file not found: {path}")
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise RenderInputError(f"input file is empty: {path}") from exc
    for col in required:
        if col not in df.columns:
            raise RenderInputError(f"missing column {col!r} in {path}")
    return df


def _draw_trajectories(df: pd.DataFrame, ax, markers: bool) -> None:
    planar = "x2" in df.columns
    n_agents = df["agent"].nunique()
    cmap = plt.get_cmap("viridis")
    for agent, g in df.groupby("agent", sort=True):
        color = cmap(agent / max(1, n_agents - 1))
        if planar:
            ax.plot(g["x1"], g["x2"], color=color, alpha=0.8)
        else:
            ax.plot(g["step"], g["x1"], color=color, alpha=0.8)
    if markers:
        first = df[df["step"] == df["step"].min()]
        last = df[df["step"] == df["step"].max()]
        if planar:
            ax.plot(first["x1"], first["x2"], "^", color="tab:red",
                    markersize=5, linestyle="none", label="initial")
            ax.plot(last["x1"], last["x2"], "o", color="tab:blue",
                    markersize=4, linestyle="none", label="steady")
            ax.plot(last["t1"], last["t2"], "o", markerfacecolor="none",
                    markeredgecolor="black", markersize=7, linestyle="none",
                    label="desired")
        else:
            kmax = last["step"].iloc[0]
            ax.plot(last["step"], last["x1"], "o", color="tab:blue",
                    markersize=4, linestyle="none", label="steady")
            ax.plot([kmax] * len(last), last["t1"], "o", markerfacecolor="none",
                    markeredgecolor="black", markersize=7, linestyle="none",
                    label="desired")
        ax.legend(loc="best", fontsize=7)
    if planar:
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    else:
        ax.set_xlabel("step")
        ax.set_ylabel("x")
    ax.set_title("agent trajectories")


def _draw_iterations(df: pd.DataFrame, ax) -> None:
    ax.semilogy(df["step"], df["iterations"], color="tab:blue")
    ax.set_xlabel("step")
    ax.set_ylabel("scaling iterations")
    ax.set_title("iterations per step under the stopping criterion")


def _draw_sweep(df: pd.DataFrame, ax, markers: bool) -> None:
    state_cols = [c for c in df.columns if c.startswith("s_")]
    if not state_cols:
        raise RenderInputError("missing column 's_1_1' (no steady-state columns)")
    for col in state_cols:
        ax.semilogx(df["epsilon"], df[col], color="tab:blue", alpha=0.8)
    if markers:
        # sharp-limit states (smallest-epsilon row) as dashed level lines
        sharp = df.iloc[0]
        for col in state_cols:
            ax.axhline(sharp[col], color="black", linestyle="--",
                       linewidth=0.6, alpha=0.6)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("steady state")
    ax.set_title("steady states over the regularization grid")


def _draw_bench(df: pd.DataFrame, ax) -> None:
    ax.axis("off")
    ax.grid(False)
    header = ["agents", "epsilon", "iteration [ms]", "iterations to 0.005",
              "exact assignment [s]"]
    cells = [
        [
            f"{int(row['agents'])}",
            f"{row['epsilon']:g}",
            f"{1e3 * row['sinkhorn_iteration_seconds']:.3f}",
            f"{int(row['sbar0'])}",
            f"{row['hungarian_seconds']:.3f}",
        ]
        for _, row in df.iterrows()
    ]
    table = ax.table(cellText=cells, colLabels=header, loc="center")
    table.scale(1.0, 1.3)
    ax.set_title("one scaling iteration vs exact assignment")


def _draw(spec: FigureSpec, ax) -> None:
    if spec.kind == "trajectories":
        df = _load(spec.inputs[0], ("step", "agent", "x1", "u1", "t1"))
        _draw_trajectories(df, ax, spec.markers)
    elif spec.kind == "iterations":
        df = _load(spec.inputs[0], ("step", "iterations"))
        _draw_iterations(df, ax)
    elif spec.kind == "sweep":
        df = _load(spec.inputs[0], ("epsilon", "steady", "residual"))
        _draw_sweep(df, ax, spec.markers)
    else:
        df = _load(
            spec.inputs[0],
            ("agents", "epsilon", "sinkhorn_iteration_seconds", "sbar0",
             "hungarian_seconds"),
        )
        _draw_bench(df, ax)


def render(spec: FigureSpec, out) -> Path:
    """Draw the figure described by spec into the image file ``out``."""
    out = Path(out)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        try:
            _draw(spec, ax)
            fig.tight_layout()
            out.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out, metadata={"Software": "smpc-plots"})
        finally:
            plt.close(fig)
    return out


def render_hash(spec: FigureSpec) -> str:
    """SHA-256 of the rendered RGBA pixel buffer under the pinned style."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        try:
            _draw(spec, ax)
            fig.tight_layout()
            fig.canvas.draw()
            buf = np.asarray(fig.canvas.buffer_rgba())
            return hashlib.sha256(buf.tobytes()).hexdigest()
        finally:
            plt.close(fig)
