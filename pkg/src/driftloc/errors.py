"""Exception types shared across the package."""


class DriftlocError(Exception):
    """Base class for all driftloc-specific errors."""


class DatasetFormatError(DriftlocError):
    """A dataset CSV file violates its schema.

    Carries the offending row number (1-based, counting the header as row 1)
    when the problem is attributable to a single row.
    """

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class ModelFormatError(DriftlocError):
    """A model file is unreadable: bad magic, unsupported version,
    truncation, or checksum mismatch."""


class HingeInactiveError(DriftlocError):
    """Raised when a gradient check is requested for a triplet whose
    hinge is inactive (raw loss <= 0), making the check vacuous."""


class StochasticModelError(DriftlocError):
    """Raised when a gradient check is requested on a model whose forward
    pass is stochastic (dropout or input noise enabled)."""


class NonFiniteLossError(DriftlocError):
    """A training step produced a non-finite loss or gradient."""
