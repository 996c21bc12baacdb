"""Exception types raised across the package."""

from __future__ import annotations


class TrfcError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(TrfcError, ValueError):
    """A model parameter or input violates its documented domain."""


class BranchOutOfDomainError(TrfcError, ValueError):
    """The requested critical-point branch has no physical solution."""


class NoInteriorPeakError(TrfcError):
    """The force curve has no interior maximum on the slip domain.

    ``edge_value`` holds the supremum reached at the domain edge.
    """

    def __init__(self, message: str, edge_value: float):
        super().__init__(message)
        self.edge_value = edge_value


class ConvergenceError(TrfcError, RuntimeError):
    """An iterative solve did not converge within its iteration cap."""


class FitError(TrfcError, RuntimeError):
    """Curve fitting failed (empty window or every start diverged)."""


class SchemaError(TrfcError, ValueError):
    """An input file does not match its expected schema."""


class ConfigError(TrfcError, ValueError):
    """A configuration file is malformed or holds an invalid value.

    ``line`` is the 1-based line the problem was traced to, when known.
    """

    def __init__(self, message: str, path: str = "", line: int | None = None):
        super().__init__(message)
        self.path = path
        self.line = line

    def __str__(self) -> str:
        where = self.path if self.line is None else f"{self.path}:{self.line}"
        return f"{where}: {self.args[0]}" if where else self.args[0]
