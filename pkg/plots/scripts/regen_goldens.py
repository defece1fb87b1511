#!/usr/bin/env python3
"""Recompute the golden hashes for the committed fixtures."""

import json
from pathlib import Path

from smpc_plots import FigureSpec, render_hash

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

INPUTS = {
    "trajectories": FIXTURES / "ex2d_trajectories.csv.gz",
    "iterations": FIXTURES / "ex2d_metrics.csv",
    "sweep": FIXTURES / "sweep.csv",
    "bench": FIXTURES / "bench.csv",
}


def main():
    goldens = {
        kind: render_hash(FigureSpec(kind=kind, inputs=(path,)))
        for kind, path in INPUTS.items()
    }
    (ROOT / "goldens.json").write_text(json.dumps(goldens, indent=2) + "\n")
    print(json.dumps(goldens, indent=2))


if __name__ == "__main__":
    main()
