"""Exception types shared across the library.

The split mirrors how failures are reported by the command line runner:
configuration problems, violated structural assumptions (reducibility and
friends), and numerical breakdowns are distinct failure classes.
"""

from __future__ import annotations


class InvalidMatrixError(ValueError):
    """A matrix argument is malformed: non-square, non-finite, or it breaks
    the sign pattern required by the operation (off-diagonal negativity
    beyond the clamp tolerance, nonpositive diagonal where positivity is
    required, ...)."""


class AssumptionViolationError(Exception):
    """A structural hypothesis of the requested computation does not hold
    for the given input (the computation itself did not fail)."""


class ReducibilityError(AssumptionViolationError):
    """An irreducible matrix (or irreducible switching chain) was required."""


class NumericalError(RuntimeError):
    """Base class for numerical breakdowns during a computation."""


class IterationLimitError(NumericalError):
    """An iterative scheme hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, last_residual: float | None = None):
        super().__init__(message)
        self.last_residual = last_residual


class ContractionFailureError(NumericalError):
    """A fixed-point iteration failed to contract to tolerance."""

    def __init__(self, message: str, last_gap: float | None = None):
        super().__init__(message)
        self.last_gap = last_gap


class NumericalBlowupError(NumericalError):
    """State left the admissible region (negative mass, nonpositive
    normalization sum, overflow)."""


class ConfigError(Exception):
    """A configuration document failed to parse or validate.

    ``key`` holds the dotted path of the offending entry when known.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
