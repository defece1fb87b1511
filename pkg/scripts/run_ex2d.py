#!/usr/bin/env python3
"""Run the planar 120-agent scenario and print the run summary."""

import json
import sys
from pathlib import Path

from sinkhorn_mpc.cli import main

out = sys.argv[1] if len(sys.argv) > 1 else "out/ex2d"
code = main(["run", "--scenario", "ex2d", "--out", out])
if code == 0:
    print(json.dumps(json.loads(Path(out, "summary.json").read_text()), indent=2))
sys.exit(code)
