"""Exception hierarchy shared across fairlens modules."""


class FairlensError(Exception):
    """Base class for all fairlens errors."""


class DomainError(FairlensError, ValueError):
    """Input lies outside the domain where an operation is defined."""


class ShapeError(FairlensError, ValueError):
    """Array shapes are inconsistent with what an operation expects."""


class DataError(FairlensError, ValueError):
    """A dataset file or in-memory dataset is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(FairlensError, ValueError):
    """An experiment or generator configuration is invalid.

    ``pointer`` is a JSON pointer to the offending field when known.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.message = message
        self.pointer = pointer


class NumericError(FairlensError, ArithmeticError):
    """A forward or backward pass produced non-finite values."""


class TrainingDiverged(NumericError):
    """Training hit a non-finite loss. ``history`` holds the epochs completed so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class UnsupportedOperation(FairlensError, TypeError):
    """Operation is not available for this model variant or task."""

