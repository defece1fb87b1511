"""Finite-horizon minimum-energy MPC for linear agents.

For an invertible input matrix the optimal control and cost have closed
forms built from the finite-horizon controllability Gramian: a feedback
gain on (x - target), a feedforward holding the target, and the cost
metric Gcal so that the horizon cost is the squared Gcal-norm of the
target error. Discrete and continuous flavors are both supported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    ParameterError,
    SingularInputError,
    UncontrollableHorizonError,
)
from .numerics import continuous_gramian, mat_power, matrix_exponential

GRAMIAN_CONDITION_CAP = 1e12


@dataclass(frozen=True)
class LinearSystem:
    """One agent's (A, B) pair; flavor marks the time axis."""

    A: np.ndarray
    B: np.ndarray
    flavor: str = "discrete"  # "discrete" | "continuous"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise DimensionError(f"B has shape {B.shape}, expected ({A.shape[0]}, m)")
        if self.flavor not in ("discrete", "continuous"):
            raise ParameterError(f"unknown flavor {self.flavor!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class MpcLaw:
    """Precomputed pieces of the closed-form law for one agent.

    gain acts on (x - target); Abar is the closed-loop matrix under a
    held target; Gcal is the cost metric, so the horizon cost is
    (x - target)' Gcal (x - target). Binv backs the feedforward and is
    None when B is not square/invertible (then only cost/gain work).
    """

    flavor: str
    horizon: float
    G: np.ndarray
    Gcal: np.ndarray
    Abar: np.ndarray
    gain: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Binv: np.ndarray | None

    def feedforward(self, xhat: np.ndarray) -> np.ndarray:
        """Input holding the target: B^{-1}(xhat - A xhat) or -B^{-1} A xhat."""
        if self.Binv is None:
            raise SingularInputError("feedforward requires an invertible B")
        if self.flavor == "discrete":
            return self.Binv @ (xhat - self.A @ xhat)
        return -self.Binv @ (self.A @ xhat)


def discrete_gramian(sys: LinearSystem, tau_h: int) -> np.ndarray:
    """G = sum_{k=0}^{tau_h-1} A^k B B' (A')^k."""
    if sys.flavor != "discrete":
        raise ParameterError("discrete_gramian needs a discrete system")
    if tau_h < 1:
        raise ParameterError(f"horizon must be >= 1, got {tau_h}")
    G = np.zeros((sys.n, sys.n))
    M = sys.B.copy()
    for _ in range(tau_h):
        G += M @ M.T
        M = sys.A @ M
    return 0.5 * (G + G.T)


def _inverse_if_square(B: np.ndarray) -> np.ndarray | None:
    if B.shape[0] != B.shape[1]:
        return None
    try:
        Binv = np.linalg.inv(B)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(Binv)) or np.linalg.cond(B) > GRAMIAN_CONDITION_CAP:
        return None
    return Binv


def build_mpc_law(sys: LinearSystem, horizon) -> MpcLaw:
    """Assemble gain, closed-loop matrix and cost metric for one agent.

    Discrete: gain = B'(A')^(tau-1) G^{-1} A^tau, Gcal = (A^tau)' G^{-1} A^tau,
    Abar = A - B gain. Continuous: Gcal = e^{A'T} G^{-1} e^{AT},
    gain = B' Gcal, Abar = A - B gain.
    """
    if sys.flavor == "discrete":
        tau_h = int(horizon)
        G = discrete_gramian(sys, tau_h)
    else:
        T_h = float(horizon)
        if not T_h > 0:
            raise ParameterError(f"horizon must be positive, got {T_h}")
        G = continuous_gramian(sys.A, sys.B, T_h)

    evals = np.linalg.eigvalsh(G)
    if evals[0] < 1e-12 * max(evals[-1], 1e-300) or evals[0] <= 0:
        raise UncontrollableHorizonError(
            f"Gramian is singular over the horizon (eigenvalues "
            f"[{evals[0]:.3e}, {evals[-1]:.3e}])"
        )
    if evals[-1] / evals[0] > GRAMIAN_CONDITION_CAP:
        raise UncontrollableHorizonError(
            f"Gramian condition number {evals[-1] / evals[0]:.3e} exceeds "
            f"{GRAMIAN_CONDITION_CAP:.0e}"
        )
    Ginv = np.linalg.inv(G)
    Ginv = 0.5 * (Ginv + Ginv.T)

    if sys.flavor == "discrete":
        Atau = mat_power(sys.A, tau_h)
        Gcal = Atau.T @ Ginv @ Atau
        gain = sys.B.T @ mat_power(sys.A.T, tau_h - 1) @ Ginv @ Atau
        hval = float(tau_h)
    else:
        E = matrix_exponential(sys.A * T_h)
        Gcal = E.T @ Ginv @ E
        gain = sys.B.T @ Gcal
        hval = T_h
    Gcal = 0.5 * (Gcal + Gcal.T)
    Abar = sys.A - sys.B @ gain
    return MpcLaw(
        flavor=sys.flavor,
        horizon=hval,
        G=G,
        Gcal=Gcal,
        Abar=Abar,
        gain=gain,
        A=sys.A,
        B=sys.B,
        Binv=_inverse_if_square(sys.B),
    )


def mpc_control(law: MpcLaw, sys: LinearSystem, x, xhat) -> np.ndarray:
    """First input of the optimal sequence toward a held target xhat."""
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    if x.shape != (sys.n,) or xhat.shape != (sys.n,):
        raise DimensionError(f"state shapes {x.shape}/{xhat.shape}, expected ({sys.n},)")
    return -law.gain @ (x - xhat) + law.feedforward(xhat)


def mpc_cost(law: MpcLaw, x, xhat) -> float:
    """Minimum horizon energy: squared Gcal-norm of the target error."""
    e = np.asarray(x, dtype=float) - np.asarray(xhat, dtype=float)
    return float(e @ law.Gcal @ e)


def open_loop_sequence(law: MpcLaw, sys: LinearSystem, x, xhat) -> np.ndarray:
    """Full minimum-energy input sequence landing exactly on xhat.

    Discrete flavor only; u[k] = ubar - B'(A')^(tau-1-k) G^{-1} A^tau (x - xhat)
    where ubar holds the target. Returns shape (tau_h, m).
    """
    if law.flavor != "discrete":
        raise ParameterError("open_loop_sequence is defined for discrete systems")
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    tau_h = int(law.horizon)
    Ginv = np.linalg.inv(law.G)
    Atau = mat_power(sys.A, tau_h)
    w = Ginv @ Atau @ (x - xhat)
    ubar = law.feedforward(xhat)
    seq = np.empty((tau_h, sys.m))
    Apow = np.eye(sys.n)  # (A')^(tau-1-k) built from k = tau-1 downward
    for k in range(tau_h - 1, -1, -1):
        seq[k] = ubar - sys.B.T @ Apow @ w
        Apow = sys.A.T @ Apow
    return seq


def discretize_euler(sys: LinearSystem, h: float) -> LinearSystem:
    """Forward-Euler map: A_d = I + h A, B_d = h B."""
    if sys.flavor != "continuous":
        raise ParameterError("discretize_euler needs a continuous system")
    if not h > 0:
        raise ParameterError(f"step size must be positive, got {h}")
    return LinearSystem(A=np.eye(sys.n) + h * sys.A, B=h * sys.B, flavor="discrete")
