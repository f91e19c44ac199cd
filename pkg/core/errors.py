"""
Exception hierarchy for planefold.

Every error carries the process exit code the CLI reports for it:
2 for bad input, 3 for numeric failures, 4 for an exhausted search.
"""
from typing import Any, Optional


class PlanefoldError(Exception):
    """Base class for all library errors."""
    exit_code = 3
    source = "App"


class InputError(PlanefoldError):
    """Malformed user input."""
    exit_code = 2
    source = "Input"


class FieldSyntaxError(InputError):
    """Field text could not be parsed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnknownIdentifierError(InputError):
    """Identifier that is neither a variable, a parameter nor a function."""

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier '{name}' at byte {offset}")
        self.name = name
        self.offset = offset


class ArityError(InputError):
    """Function called with the wrong number of arguments."""

    def __init__(self, name: str, expected: int, got: int, offset: int):
        super().__init__(
            f"function '{name}' takes {expected} argument(s), got {got} at byte {offset}"
        )
        self.name = name
        self.offset = offset


class RunConfigError(InputError):
    """Invalid run configuration."""


class NumericError(PlanefoldError):
    """A computation could not be completed."""
    exit_code = 3
    source = "Numeric"


class FieldDomainError(NumericError):
    """Expression undefined at the evaluation point."""


class FieldSingularityError(NumericError):
    """|eta(p)| below the singularity threshold."""

    def __init__(self, point: Any, norm: float):
        super().__init__(f"field singularity at {list(point)} (|eta| = {norm:.3e})")
        self.point = point
        self.norm = norm


class UmbilicError(NumericError):
    """Partially umbilic point where a principal direction is needed."""

    def __init__(self, point: Any, gap: float):
        super().__init__(f"partially umbilic point near {list(point)} (gap = {gap:.3e})")
        self.point = point
        self.gap = gap


class NoReturnError(NumericError):
    """The principal line never came back to the section."""


class RefinementError(NumericError):
    """Cycle refinement did not converge."""


class ChartError(NumericError):
    """Tubular chart could not be built."""


class ChartDomainError(ChartError):
    """Chart coordinates outside the injectivity radius."""


class DegenerateSystemError(NumericError):
    """det A(s) vanishes on the cycle."""


class IntegrationError(NumericError):
    """The variational ODE could not be integrated."""


class NonIntegrableError(NumericError):
    """Closed forms requested for a non-integrable plane field."""


class SearchExhaustedError(PlanefoldError):
    """Hyperbolization search found no certified perturbation."""
    exit_code = 4
    source = "Control"

    def __init__(self, message: str, best: Optional[Any] = None):
        super().__init__(message)
        self.best = best


class ReducedFormError(NumericError):
    """Reduced quadratic requested where the first plane coefficient vanishes."""
