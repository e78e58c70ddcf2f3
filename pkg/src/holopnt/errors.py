"""Exception hierarchy shared by all modules.

Errors split into two families so the command line can map them onto exit
codes: input problems (bad documents, bad indices, unbound parameters) and
numerical problems (frame degeneracy, unstable differences, unconverged
truncation).
"""

from __future__ import annotations


class HolopntError(Exception):
    """Base class for every error raised by the package."""


class ModelInputError(HolopntError, ValueError):
    """A model, loop or expression document could not be accepted.

    ``line`` and ``column`` are 1-based when known.  ``path`` names the
    offending key inside the document, e.g. ``graph.edge[2].i``.
    """

    def __init__(self, message: str, *, line: int | None = None,
                 column: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.path = path
        super().__init__(self.describe())

    def describe(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
            if self.column is not None:
                where.append(f"column {self.column}")
        if self.path:
            where.append(f"at {self.path}")
        if where:
            return f"{self.message} ({', '.join(where)})"
        return self.message


class ConfigurationError(HolopntError, ValueError):
    """An operation was called with an inconsistent configuration."""


class NumericalFailure(HolopntError, ArithmeticError):
    """A numerical routine could not deliver a result to tolerance."""


class FrameDegeneracyError(NumericalFailure):
    """A transported eigenframe lost rank or its eigenvalue gap closed."""


class StepSizeError(NumericalFailure):
    """A finite-difference result violated its anti-Hermiticity budget."""


class CutoffConvergenceError(NumericalFailure):
    """Results kept changing when the Fock cutoff was raised."""


class ConvergenceError(NumericalFailure):
    """An iterative refinement (loop discretisation, ODE) did not converge."""


class ReliabilityWarning(UserWarning):
    """Non-fatal numerical caveat attached to a result."""
