"""Exception types shared across the package.

Input/shape problems derive from ValueError, runtime numerical failures
from RuntimeError; the CLI maps the former to exit code 2 and the latter
to exit code 3.
"""

from __future__ import annotations


class SinkhornMpcError(Exception):
    """Base class for all package errors."""


class DimensionError(SinkhornMpcError, ValueError):
    """Operand shapes are inconsistent with the operation."""


class ParameterError(SinkhornMpcError, ValueError):
    """A scalar parameter is outside its admissible range."""


class SizeCapError(SinkhornMpcError, ValueError):
    """Problem size exceeds a hard cap of an exhaustive routine."""


class DegenerateKernelError(SinkhornMpcError, ValueError):
    """A Gibbs kernel has an all-zero row or column after underflow.

    ``index`` is the (i, j) of the entry that underflowed in the dead
    row/column, ``cost`` the cost value that caused it.
    """

    def __init__(self, message: str, index: tuple[int, int], cost: float):
        super().__init__(message)
        self.index = index
        self.cost = cost


class DegenerateRowError(SinkhornMpcError, ValueError):
    """A coupling row with zero marginal cannot be normalized."""


class UncontrollableHorizonError(SinkhornMpcError, ValueError):
    """The finite-horizon Gramian is singular (or nearly so)."""


class SingularInputError(SinkhornMpcError, ValueError):
    """The input matrix B is not invertible but the control law needs it."""


class NumericalError(SinkhornMpcError, RuntimeError):
    """A numerical routine failed to produce a usable result."""


class EigenSolveError(NumericalError):
    """Eigenvalue iteration did not converge; carries the last estimate."""

    def __init__(self, message: str, last_estimate: float | None = None):
        super().__init__(message)
        self.last_estimate = last_estimate


class SinkhornBreakdownError(NumericalError):
    """A Sinkhorn denominator became zero or non-finite."""


class SinkhornNonConvergenceError(NumericalError):
    """Iteration cap hit before the stopping tolerance was met.

    Carries the best coupling seen so far, the iterations spent and the
    violation at the best coupling.
    """

    def __init__(self, message: str, best, iterations: int, violation: float):
        super().__init__(message)
        self.best = best
        self.iterations = iterations
        self.violation = violation


class SimulationAbortError(NumericalError):
    """A closed-loop run aborted; carries the step index and cause."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"simulation aborted at step {step}: {cause}")
        self.step = step
        self.cause = cause


class ScenarioError(SinkhornMpcError, ValueError):
    """A scenario file failed validation; ``field`` names the bad entry."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
