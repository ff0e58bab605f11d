"""Exception and warning types shared by every module."""

from __future__ import annotations


class ArtifactError(Exception):
    """Base error carrying the module and operation that raised it."""

    exit_code = 1

    def __init__(self, message: str, module: str = "", operation: str = ""):
        self.module = module
        self.operation = operation
        where = f"{module}.{operation}: " if module else ""
        super().__init__(where + message)


class ValidationError(ArtifactError, ValueError):
    """Input violates a documented precondition."""

    exit_code = 2


class NonConvergenceError(ArtifactError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""

    exit_code = 3


class NumericalWarning(UserWarning):
    """Soft numerical flag (cutoff too small, weak-potential regime left, ...)."""
