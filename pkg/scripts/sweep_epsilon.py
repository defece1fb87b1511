#!/usr/bin/env python3
"""Steady states of the 1-D fleet over a grid of regularization weights."""

import sys

from sinkhorn_mpc.cli import main

out = sys.argv[1] if len(sys.argv) > 1 else "out/sweep"
sys.exit(main(["sweep", "--scenario", "sweep-1d", "--out", out]))
