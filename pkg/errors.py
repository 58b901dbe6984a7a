# errors.py

from typing import Optional


class OscillabError(Exception):
    """Base class for every error raised by the simulation library."""


class ParameterRangeError(OscillabError, ValueError):
    """A parameter lies outside its admissible range."""

    def __init__(self, name: str, value, constraint: str):
        self.name = name
        self.value = value
        self.constraint = constraint
        super().__init__(f"{name}={value!r} violates {constraint}")


class TruncationError(OscillabError):
    """A truncation length cannot meet the requested discarded-mass tolerance."""

    def __init__(self, message: str, required: Optional[float] = None):
        self.required = required
        if required is not None:
            message = f"{message} (required: {required:.6g})"
        super().__init__(message)


class ConditioningError(OscillabError):
    def __init__(self, condition_number: float, threshold: float):
        self.condition_number = condition_number
        self.threshold = threshold
        super().__init__(
            f"linear system is ill-conditioned: estimated condition number "
            f"{condition_number:.3e} exceeds {threshold:.1e}"
        )


class ConstructionError(OscillabError):
    """A rank-m function or coefficient process could not be built."""


class InputDomainError(OscillabError):
    """A user function returned non-finite values at quadrature nodes."""


class ResolutionError(OscillabError):
    """A sampled path is too coarse or misaligned for the requested scale."""


class CoverageError(OscillabError):
    """A sampled path does not cover the interval an operation needs."""


class ComplexityError(OscillabError):
    """A request exceeds the desk-scale complexity guard."""
