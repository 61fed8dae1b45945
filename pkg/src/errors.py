"""
Exception hierarchy shared by the solver library and the experiment CLI.
"""
from typing import Optional


class HelmholtzError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidInputError(HelmholtzError, ValueError):
    """A precondition on the caller's input was violated."""

    exit_code = 2


class SolverError(HelmholtzError):
    """A numerical kernel failed to produce a result."""

    exit_code = 3


class SingularMatrixError(SolverError):
    """LU factorization met an exact zero pivot."""

    def __init__(self, pivot: int, message: Optional[str] = None):
        self.pivot = pivot
        super().__init__(message or f"Matrix is singular: zero pivot at index {pivot}")


class ConvergenceError(SolverError):
    """An iterative method stopped before converging."""

    def __init__(self, index: int, message: Optional[str] = None):
        self.index = index
        super().__init__(message or f"Iteration did not converge at index {index}")


class InsufficientDataError(SolverError):
    """Too few usable results were left to fit or select from."""
