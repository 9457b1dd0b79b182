"""Exception hierarchy shared by all modules."""


class ShiftLIFError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ShiftLIFError, ValueError):
    """An argument is outside its documented range."""


class DomainError(ShiftLIFError, ValueError):
    """A numeric input is not in the function's domain (e.g. NaN)."""


class DimensionError(ShiftLIFError, ValueError):
    """Array shapes do not conform."""


class RangeError(ShiftLIFError, OverflowError):
    """A fixed-point value does not fit its declared bit width."""


class TrainingFault(ShiftLIFError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ShiftLIFError, ValueError):
    """Configuration file could not be parsed or failed validation."""

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])
