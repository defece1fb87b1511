#!/usr/bin/env python3
"""Total input energy of the 1-D fleet under one vs five scaling
iterations per step, over a handful of seeds."""

import dataclasses
import sys

from sinkhorn_mpc import FixedCount, run
from sinkhorn_mpc.cli import load_scenario, materialize

base_seed = int(sys.argv[1]) if len(sys.argv) > 1 else 202
sf = load_scenario("ex1d")
print(f"{'seed':>6} {'S=1':>10} {'S=5':>10}")
for seed in range(base_seed, base_seed + 5):
    sc = dataclasses.replace(
        materialize(sf, seed=seed), log_diagnostics=False, snapshots="off"
    )
    energies = {}
    for S in (1, 5):
        log = run(dataclasses.replace(sc, schedule=FixedCount(S)))
        energies[S] = log.raw_energy.sum()
    print(f"{seed:>6} {energies[1]:>10.3f} {energies[5]:>10.3f}")
