"""Exact assignment baselines.

``hungarian`` is an O(N^3) shortest-augmenting-path solver
(Jonker-Volgenant flavor) with numpy-vectorized column scans;
``brute_force_assignment`` enumerates all permutations as a small-N
oracle.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, ParameterError, SizeCapError

BRUTE_FORCE_CAP = 9


@dataclass(frozen=True)
class Assignment:
    """A permutation sigma (sigma[i] = column assigned to row i) and its cost."""

    sigma: np.ndarray
    total_cost: float


def _as_square_cost(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionError(f"cost matrix must be square, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ParameterError("cost matrix entries must be finite")
    return C


def hungarian(C) -> Assignment:
    """Minimum-cost perfect matching on a square cost matrix.

    Maintains dual potentials (u, v) and grows one shortest augmenting
    path per row; ties are broken by the first minimum in column order,
    so results are deterministic.
    """
    C = _as_square_cost(C)
    n = C.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    row_of = np.full(n, -1)  # column -> assigned row
    col_of = np.full(n, -1)  # row -> assigned column
    for cur in range(n):
        minv = np.full(n, np.inf)
        way = np.full(n, -1)  # predecessor column on the alternating path
        used = np.zeros(n, dtype=bool)
        i0 = cur
        j0 = -1
        while True:
            reduced = C[i0] - u[i0] - v
            upd = ~used & (reduced < minv)
            minv[upd] = reduced[upd]
            way[upd] = j0
            masked = np.where(used, np.inf, minv)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[cur] += delta
            usedj = np.flatnonzero(used)
            if usedj.size:
                u[row_of[usedj]] += delta
                v[usedj] -= delta
            minv[~used] -= delta
            used[j1] = True
            if row_of[j1] < 0:
                break
            i0 = row_of[j1]
            j0 = j1
        j = j1
        while j >= 0:
            jp = way[j]
            row_of[j] = cur if jp < 0 else row_of[jp]
            col_of[row_of[j]] = j
            j = jp
    sigma = col_of.copy()
    total = float(C[np.arange(n), sigma].sum())
    return Assignment(sigma=sigma, total_cost=total)


@lru_cache(maxsize=None)
def _perm_table(n: int) -> np.ndarray:
    # lexicographic order, so argmin tie-breaks to the smallest permutation
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def brute_force_assignment(C) -> Assignment:
    """Exhaustive minimum over all N! permutations, N <= 9.

    Ties resolve to the lexicographically smallest permutation.
    """
    C = _as_square_cost(C)
    n = C.shape[0]
    if n > BRUTE_FORCE_CAP:
        raise SizeCapError(
            f"brute force capped at N <= {BRUTE_FORCE_CAP}, got N = {n}"
        )
    perms = _perm_table(n)
    costs = C[np.arange(n)[None, :], perms].sum(axis=1)
    best = int(np.argmin(costs))
    sigma = perms[best].copy()
    return Assignment(sigma=sigma, total_cost=float(C[np.arange(n), sigma].sum()))
