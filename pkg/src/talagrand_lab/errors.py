"""Exception types shared across the lab.

Each class carries the CLI exit code it maps to, so the command layer can
translate failures without inspecting messages.
"""


class LabError(Exception):
    exit_code = 1


class InvalidMeasureError(LabError, ValueError):
    """A measure violates its construction invariants."""

    exit_code = 3


class DimensionMismatchError(LabError, ValueError):
    exit_code = 3


class HypothesisError(LabError, ValueError):
    """A mathematical hypothesis of an inequality is not met by the input."""

    exit_code = 3


class InequalityViolation(LabError):
    exit_code = 2


class AccuracyError(LabError, ArithmeticError):
    """A numerical routine could not reach its declared accuracy.

    ``estimate`` holds whatever value was achieved.
    """

    exit_code = 4

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class BasisDegeneracyError(AccuracyError):
    pass


class MarginalMismatchError(AccuracyError):
    pass


class UnsupportedKindError(LabError, TypeError):
    exit_code = 3


class SizeCapError(LabError, ValueError):
    exit_code = 4
