"""Maps a transport plan to per-agent temporary targets.

The shipped navigator is the barycentric projection: each agent heads
for the marginal-normalized weighted average of the targets under its
plan row, which stays inside the convex hull of the targets. Custom
navigators plug in as callables with the same signature.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateRowError, DimensionError
from .otcore import Coupling


def barycentric_targets(P, targets, a) -> np.ndarray:
    """x_tmp[i] = (1 / a_i) * sum_j P_ij targets[j].

    With uniform row marginals a = 1/N this is N * P @ targets; a plan
    concentrated on a permutation reproduces the assigned targets
    exactly.
    """
    P = P.P if isinstance(P, Coupling) else np.asarray(P, dtype=float)
    targets = np.asarray(targets, dtype=float)
    a = np.asarray(a, dtype=float)
    if targets.ndim != 2:
        raise DimensionError(f"targets must be (M, n), got {targets.shape}")
    if P.shape != (a.size, targets.shape[0]):
        raise DimensionError(
            f"plan shape {P.shape} does not match {a.size} agents x "
            f"{targets.shape[0]} targets"
        )
    if np.any(a <= 0):
        i = int(np.flatnonzero(a <= 0)[0])
        raise DegenerateRowError(f"row marginal a[{i}] = {a[i]!r} is not positive")
    return (P @ targets) / a[:, None]
