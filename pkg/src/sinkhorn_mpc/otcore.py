"""Entropic optimal transport core.

Gibbs kernels, diagonal-scaling (Sinkhorn) iterations in the linear
domain, transport plans, the Hilbert projective metric and the
associated contraction factor, and the l1 marginal-violation stopping
statistic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateKernelError,
    DimensionError,
    ParameterError,
    SinkhornBreakdownError,
    SinkhornNonConvergenceError,
)

CONTRACTION_DIAGNOSTIC_SIZE = 64


@dataclass(frozen=True)
class GibbsKernel:
    """Elementwise exponential K_ij = exp(-C_ij / epsilon) of a cost matrix."""

    K: np.ndarray
    epsilon: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.K.shape


@dataclass(frozen=True)
class Marginals:
    """Row and column mass distributions; each sums to one."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        for name, vec in (("a", a), ("b", b)):
            if vec.ndim != 1:
                raise DimensionError(f"marginal {name} must be a vector")
            if np.any(vec < 0) or not np.all(np.isfinite(vec)):
                raise ParameterError(f"marginal {name} must be nonnegative and finite")
            if abs(vec.sum() - 1.0) > 1e-12:
                raise ParameterError(f"marginal {name} must sum to 1, got {vec.sum()!r}")

    @staticmethod
    def uniform(N: int, M: int | None = None) -> "Marginals":
        M = N if M is None else M
        return Marginals(np.full(N, 1.0 / N), np.full(M, 1.0 / M))


@dataclass(frozen=True)
class ScalingPair:
    """Positive diagonal scaling vectors (alpha, beta) of a coupling."""

    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class Coupling:
    """Transport plan P = diag(alpha) K diag(beta) with its scalings."""

    P: np.ndarray
    scaling: ScalingPair
    kernel_epsilon: float


@dataclass(frozen=True)
class FixedCount:
    """Run exactly ``count`` Sinkhorn iterations."""

    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ParameterError(f"iteration count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class MarginalTolerance:
    """Iterate until the l1 marginal violation drops below ``theta``."""

    theta: float
    cap: int = 100_000

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError(f"tolerance must be positive, got {self.theta}")
        if self.cap < 1:
            raise ParameterError(f"iteration cap must be >= 1, got {self.cap}")


StoppingPolicy = FixedCount | MarginalTolerance


def gibbs_kernel(C, epsilon: float) -> GibbsKernel:
    """Exponentiate a nonnegative cost matrix into a Gibbs kernel.

    Entries may underflow to zero for costs far above ``epsilon``; the
    kernel is rejected only when a whole row or column underflows, since
    the scaling iteration then has a guaranteed division by zero.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise DimensionError(f"cost matrix must be 2-D, got shape {C.shape}")
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if not np.all(np.isfinite(C)):
        raise ParameterError("cost matrix entries must be finite")
    K = np.exp(-C / epsilon)
    dead_rows = np.flatnonzero(~K.any(axis=1))
    dead_cols = np.flatnonzero(~K.any(axis=0))
    if dead_rows.size or dead_cols.size:
        if dead_rows.size:
            i = int(dead_rows[0])
            j = int(np.argmax(C[i]))
        else:
            j = int(dead_cols[0])
            i = int(np.argmax(C[:, j]))
        raise DegenerateKernelError(
            f"kernel {'row' if dead_rows.size else 'column'} underflowed to zero: "
            f"entry ({i}, {j}) has cost {C[i, j]:.6g} with epsilon {epsilon:.6g}",
            index=(i, j),
            cost=float(C[i, j]),
        )
    return GibbsKernel(K=K, epsilon=float(epsilon))


def _check_positive_finite(v: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise SinkhornBreakdownError(
            f"{what} has a zero, negative or non-finite entry"
        )


def sinkhorn_step(kernel: GibbsKernel, m: Marginals, alpha_in) -> ScalingPair:
    """One full scaling iteration: a beta-update followed by an alpha-update."""
    K = kernel.K
    alpha_in = np.asarray(alpha_in, dtype=float)
    N, M = K.shape
    if alpha_in.shape != (N,) or m.a.shape != (N,) or m.b.shape != (M,):
        raise DimensionError(
            f"shape mismatch: K {K.shape}, a {m.a.shape}, b {m.b.shape}, "
            f"alpha {alpha_in.shape}"
        )
    _check_positive_finite(alpha_in, "alpha input")
    t = K.T @ alpha_in
    _check_positive_finite(t, "beta denominator K'alpha")
    beta = m.b / t
    s = K @ beta
    _check_positive_finite(s, "alpha denominator K beta")
    alpha_out = m.a / s
    return ScalingPair(alpha=alpha_out, beta=beta)


def coupling_from(kernel: GibbsKernel, s: ScalingPair) -> Coupling:
    """Assemble P_ij = alpha_i K_ij beta_j."""
    K = kernel.K
    if s.alpha.shape != (K.shape[0],) or s.beta.shape != (K.shape[1],):
        raise DimensionError(
            f"scaling shapes {s.alpha.shape}/{s.beta.shape} do not match kernel {K.shape}"
        )
    P = s.alpha[:, None] * K * s.beta[None, :]
    return Coupling(P=P, scaling=s, kernel_epsilon=kernel.epsilon)


def marginal_violation(P, m: Marginals) -> float:
    """l1 distance of the plan's row/column sums from the marginals."""
    P = P.P if isinstance(P, Coupling) else np.asarray(P, dtype=float)
    if P.shape != (m.a.size, m.b.size):
        raise DimensionError(f"plan shape {P.shape} does not match marginals")
    return float(np.abs(P.sum(axis=1) - m.a).sum() + np.abs(P.sum(axis=0) - m.b).sum())


def sinkhorn_solve(
    kernel: GibbsKernel,
    m: Marginals,
    alpha0,
    stop: StoppingPolicy,
) -> tuple[Coupling, int]:
    """Iterate sinkhorn_step from alpha0 under the given stopping policy.

    The coupling returned after iteration l pairs the freshly updated
    alpha with the beta computed from the previous alpha (the row
    marginal is therefore met exactly up to rounding). Under
    MarginalTolerance, the first coupling whose violation is below theta
    is returned together with the number of iterations spent; hitting
    the cap raises SinkhornNonConvergenceError carrying the best
    coupling seen.
    """
    K = kernel.K
    alpha = np.asarray(alpha0, dtype=float)
    N, M = K.shape
    if alpha.shape != (N,) or m.a.shape != (N,) or m.b.shape != (M,):
        raise DimensionError(
            f"shape mismatch: K {K.shape}, a {m.a.shape}, b {m.b.shape}, "
            f"alpha0 {alpha.shape}"
        )
    _check_positive_finite(alpha, "alpha0")

    if isinstance(stop, FixedCount):
        beta = None
        for _ in range(stop.count):
            pair = sinkhorn_step(kernel, m, alpha)
            alpha, beta = pair.alpha, pair.beta
        return coupling_from(kernel, ScalingPair(alpha, beta)), stop.count

    if not isinstance(stop, MarginalTolerance):
        raise ParameterError(f"unknown stopping policy {stop!r}")

    best_pair = None
    best_viol = np.inf
    t = K.T @ alpha
    _check_positive_finite(t, "beta denominator K'alpha")
    for l in range(1, stop.cap + 1):
        beta = m.b / t
        s = K @ beta
        _check_positive_finite(s, "alpha denominator K beta")
        alpha = m.a / s
        t = K.T @ alpha
        _check_positive_finite(t, "beta denominator K'alpha")
        viol = float(
            np.abs(alpha * s - m.a).sum() + np.abs(beta * t - m.b).sum()
        )
        if viol < best_viol:
            best_viol = viol
            best_pair = ScalingPair(alpha.copy(), beta.copy())
        if viol < stop.theta:
            return coupling_from(kernel, ScalingPair(alpha, beta)), l
    raise SinkhornNonConvergenceError(
        f"violation {best_viol:.3e} above tolerance {stop.theta:.3e} "
        f"after {stop.cap} iterations",
        best=coupling_from(kernel, best_pair),
        iterations=stop.cap,
        violation=best_viol,
    )


def hilbert_metric(beta, beta2) -> float:
    """Hilbert projective distance: log of the spread of the entry ratios.

    Zero exactly when the vectors are positive scalar multiples of each
    other.
    """
    beta = np.asarray(beta, dtype=float)
    beta2 = np.asarray(beta2, dtype=float)
    if beta.shape != beta2.shape or beta.ndim != 1:
        raise DimensionError("inputs must be 1-D vectors of equal length")
    if np.any(beta <= 0) or np.any(beta2 <= 0):
        raise ParameterError("Hilbert metric requires strictly positive vectors")
    r = beta / beta2
    return float(np.log(r.max() / r.min()))


def contraction_factor(kernel) -> float:
    """Birkhoff contraction factor lambda(K) = (sqrt(eta)-1)/(sqrt(eta)+1).

    eta is the largest cross-ratio K_ik K_jl / (K_jk K_il); the maximum
    over column pairs factorizes per row pair, which is algebraically
    identical to the four-index enumeration. Exhaustive over row pairs,
    so intended as a diagnostic at small sizes.
    """
    K = kernel.K if isinstance(kernel, GibbsKernel) else np.asarray(kernel, dtype=float)
    if np.any(K <= 0):
        raise ParameterError("contraction factor requires a strictly positive kernel")
    N, M = K.shape
    if max(N, M) > CONTRACTION_DIAGNOSTIC_SIZE:
        warnings.warn(
            f"contraction_factor is an exhaustive diagnostic; size {K.shape} "
            f"is above the intended limit {CONTRACTION_DIAGNOSTIC_SIZE}",
            stacklevel=2,
        )
    eta = 1.0
    for i in range(N):
        for j in range(i + 1, N):
            r = K[i] / K[j]
            eta = max(eta, r.max() / r.min())
    se = np.sqrt(eta)
    return float((se - 1.0) / (se + 1.0))


def _refine_coupling(
    logK: np.ndarray,
    m: Marginals,
    u0: np.ndarray,
    v0: np.ndarray,
    theta: float = 1e-10,
    sinkhorn_iters: int = 200,
    newton_iters: int = 80,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Drive the scaling residuals below ``theta``; diagnostic use.

    Plain scaling iterations converge only linearly and stall on sharp
    kernels, so after a warm-up this switches to damped Newton steps on
    the log-scaling variables (u, v). Returns (u, v, P, violation).
    Raises SinkhornNonConvergenceError when the target is not met.
    """
    a, b = m.a, m.b
    u = np.asarray(u0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    n, mm = logK.shape

    def plan(u, v):
        return np.exp(u[:, None] + v[None, :] + logK)

    def violation(P):
        return float(np.abs(P.sum(1) - a).sum() + np.abs(P.sum(0) - b).sum())

    # warm-up: scaling iterations in the log domain
    for _ in range(sinkhorn_iters):
        P = plan(u, v)
        viol = violation(P)
        if viol < theta:
            return u, v, P, viol
        with np.errstate(divide="ignore"):
            v = v + np.log(b) - np.log(P.sum(0))
            P = plan(u, v)
            u = u + np.log(a) - np.log(P.sum(1))
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise SinkhornBreakdownError("scaling refinement produced non-finite duals")

    P = plan(u, v)
    viol = violation(P)
    for _ in range(newton_iters):
        if viol < theta:
            return u, v, P, viol
        r1 = P.sum(1) - a
        r2 = P.sum(0) - b
        J = np.zeros((n + mm, n + mm))
        J[:n, :n] = np.diag(P.sum(1))
        J[:n, n:] = P
        J[n:, :n] = P.T
        J[n:, n:] = np.diag(P.sum(0))
        J[np.arange(n + mm), np.arange(n + mm)] += 1e-13 * max(1.0, float(P.sum()))
        rhs = -np.concatenate([r1, r2])
        try:
            d = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(J, rhs, rcond=None)[0]
        step = 1.0
        for _ in range(50):
            u2 = u + step * d[:n]
            v2 = v + step * d[n:]
            P2 = plan(u2, v2)
            viol2 = violation(P2)
            if viol2 < viol and np.all(np.isfinite(P2)):
                u, v, P, viol = u2, v2, P2, viol2
                break
            step *= 0.5
        else:
            break
    if viol < theta:
        return u, v, P, viol
    alpha = np.exp(u)
    beta = np.exp(v)
    best = Coupling(P=P, scaling=ScalingPair(alpha, beta), kernel_epsilon=np.nan)
    raise SinkhornNonConvergenceError(
        f"refinement stalled at violation {viol:.3e} (target {theta:.3e})",
        best=best,
        iterations=sinkhorn_iters + newton_iters,
        violation=viol,
    )
