#!/usr/bin/env python3
"""Wall-clock of one scaling iteration vs an exact assignment solve."""

import sys

from sinkhorn_mpc.cli import main

sizes = sys.argv[1] if len(sys.argv) > 1 else "120,500,1000,3000"
out = sys.argv[2] if len(sys.argv) > 2 else "out/bench"
sys.exit(
    main(
        [
            "bench", "--scenario", "bench-template",
            "--sizes", sizes, "--eps", "2.0,4.0", "--out", out,
        ]
    )
)
