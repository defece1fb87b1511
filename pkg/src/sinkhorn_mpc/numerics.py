"""Small dense-matrix utilities: powers, spectral radius, exponential,
and the continuous-time controllability Gramian.

All matrices are plain 2-D float64 numpy arrays in row-major order.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, EigenSolveError, ParameterError

EIG_TOL = 1e-12
EIG_MAX_ITER = 10_000


def _as_square(A, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def mat_power(A, k: int) -> np.ndarray:
    """A**k by repeated multiplication; k = 0 gives the identity."""
    A = _as_square(A)
    if k < 0:
        raise ParameterError(f"exponent must be nonnegative, got {k}")
    return np.linalg.matrix_power(A, k)


def spectral_radius(A) -> float:
    """Largest eigenvalue magnitude.

    1x1 and 2x2 use closed forms; larger sizes go through the LAPACK
    eigensolver, whose (rare) non-convergence is reported with a
    power-iteration estimate attached.
    """
    A = _as_square(A)
    n = A.shape[0]
    if not np.all(np.isfinite(A)):
        raise ParameterError("matrix entries must be finite")
    if n == 1:
        return abs(float(A[0, 0]))
    if n == 2:
        tr = A[0, 0] + A[1, 1]
        det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
        disc = tr * tr - 4.0 * det
        if disc < 0.0:
            # complex pair, |lambda|^2 = det
            return float(np.sqrt(det))
        s = np.sqrt(disc)
        return float(max(abs((tr + s) / 2.0), abs((tr - s) / 2.0)))
    try:
        return float(np.max(np.abs(np.linalg.eigvals(A))))
    except np.linalg.LinAlgError as exc:
        raise EigenSolveError(
            f"eigenvalue iteration failed after cap {EIG_MAX_ITER}: {exc}",
            last_estimate=_power_iteration_estimate(A),
        ) from exc


def _power_iteration_estimate(A: np.ndarray, iters: int = 50) -> float:
    v = np.ones(A.shape[0])
    est = 0.0
    for _ in range(iters):
        w = A @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0 or not np.isfinite(nrm):
            break
        est = nrm / np.linalg.norm(v)
        v = w / nrm
    return est


def matrix_exponential(A) -> np.ndarray:
    """expm(A) by scaling-and-squaring with Pade approximation."""
    A = _as_square(A)
    return scipy.linalg.expm(A)


def continuous_gramian(A, B, T_h: float) -> np.ndarray:
    """Finite-horizon continuous controllability Gramian.

    G = int_0^T  e^(A t) B B' e^(A' t) dt, evaluated through the
    exponential of the augmented block matrix [[-A, BB'], [0, A']]
    (Van Loan's identity). Returns the symmetrized result.
    """
    A = _as_square(A)
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise DimensionError(f"B has shape {B.shape}, expected ({A.shape[0]}, m)")
    if not T_h > 0:
        raise ParameterError(f"horizon must be positive, got {T_h}")
    n = A.shape[0]
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = -A
    blk[:n, n:] = B @ B.T
    blk[n:, n:] = A.T
    E = scipy.linalg.expm(blk * T_h)
    G = E[n:, n:].T @ E[:n, n:]
    return 0.5 * (G + G.T)
