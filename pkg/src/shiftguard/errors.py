"""Exception types raised across the package."""


class ShiftGuardError(Exception):
    """Base class for all package errors."""


class DomainError(ShiftGuardError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ValidationError(ShiftGuardError, ValueError):
    """Malformed input data (bad distribution, shape, or label set)."""


class DegenerateInputError(ShiftGuardError, ValueError):
    """Input for which the requested quantity is undefined.

    Raised, for instance, when a threshold is optimised on a set with no
    incorrect predictions, which leaves the correctly-rejected rate
    undefined.
    """


class DataFormatError(ShiftGuardError, ValueError):
    """A data file could not be parsed. Carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StageError(ShiftGuardError):
    """An experiment failed; ``stage`` names the pipeline step that raised."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
