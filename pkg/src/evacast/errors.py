"""Exception hierarchy shared across the package."""


class EvacastError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(EvacastError):
    """A value or structure violates a documented invariant."""


class ParseError(EvacastError):
    """An input file could not be parsed."""


class DegenerateBaselineError(EvacastError):
    """A 7-day regular-speed baseline is missing or non-positive."""


class TrainingDivergedError(EvacastError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ModelFormatError(EvacastError):
    """A model file is corrupt or structurally invalid."""


class ModelVersionError(EvacastError):
    """A model file declares an unsupported format version."""
