"""Exception taxonomy.

Validation problems (bad arguments, malformed input files) raise
InvalidInputError subclasses and map to CLI exit code 2; numerical
failures discovered mid-computation map to exit code 1.
"""


class InvalidInputError(ValueError):
    """Caller supplied invalid arguments or malformed data."""


class UnsupportedDimensionError(InvalidInputError):
    """Problem dimension outside the range the asymptotic formulas support."""


class ComputeError(RuntimeError):
    """A computation failed on valid input."""


class DegenerateCoordinateError(ComputeError):
    """A score vector or debias denominator collapsed for some coordinate."""

    def __init__(self, j: int, message: str):
        self.j = j
        super().__init__(message)


class GenerationError(ComputeError):
    """Synthetic data generation could not complete (e.g. rejection stall)."""
