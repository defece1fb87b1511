#!/usr/bin/env python3
"""Regenerate the committed CSV fixtures through the sinkhorn-mpc CLI.

Uses a shortened variant of the planar scenario for the trajectory and
metrics fixtures; the sweep and bench fixtures come from the shipped
scenarios directly.
"""

import gzip
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def cli(*args):
    subprocess.run([sys.executable, "-m", "sinkhorn_mpc", *args], check=True)


def main():
    FIXTURES.mkdir(exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        # shortened planar run: the fan is fully formed well before 250 steps
        doc = json.loads(
            subprocess.run(
                [sys.executable, "-m", "sinkhorn_mpc", "validate", "--scenario",
                 "ex2d"],
                check=True, capture_output=True, text=True,
            ).stdout
        )
        doc["steps"] = 250
        doc["name"] = "ex2d-250"
        scenario = tmp / "ex2d-250.json"
        scenario.write_text(json.dumps(doc))
        cli("run", "--scenario", str(scenario), "--out", str(tmp / "run"))
        with open(tmp / "run" / "trajectories.csv", "rb") as src, gzip.GzipFile(
            FIXTURES / "ex2d_trajectories.csv.gz", "wb", mtime=0
        ) as dst:
            shutil.copyfileobj(src, dst)
        shutil.copy(tmp / "run" / "metrics.csv", FIXTURES / "ex2d_metrics.csv")

        cli("sweep", "--scenario", "sweep-1d", "--out", str(tmp / "sweep"))
        shutil.copy(tmp / "sweep" / "sweep.csv", FIXTURES / "sweep.csv")

        cli("bench", "--scenario", "bench-template", "--sizes", "8,16",
            "--eps", "0.5,1.0", "--out", str(tmp / "bench"))
        shutil.copy(tmp / "bench" / "bench.csv", FIXTURES / "bench.csv")
    print(f"fixtures written to {FIXTURES}")


if __name__ == "__main__":
    main()
