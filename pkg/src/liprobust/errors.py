"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class FormatError(ValueError):
    """Raised when a binary file does not parse.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """Raised for malformed experiment configurations."""


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


class ConvergenceWarning(UserWarning):
    """Issued when an iterative solver stops at its iteration cap."""
