"""Exception types shared across the package."""


class CrbmError(Exception):
    """Base class for all package errors."""


class DegenerateMassError(CrbmError):
    """An interval mass underflowed double precision; the caller must widen or clamp."""


class OutOfRangeLevelError(CrbmError):
    """An ordinal level lies outside the 1..L range of its scale."""


class ParseError(CrbmError):
    """A data file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyDatasetError(CrbmError):
    """A loaded dataset contains no observations."""


class SchemaMismatchError(CrbmError):
    """A survey value does not fit its declared column schema."""


class MissingTimestampsError(CrbmError):
    """A time-ordered split was requested but the data has no timestamps."""


class EmptyEvaluationError(CrbmError):
    """A metric was requested over an empty set of cells."""


class TrainingDivergedError(CrbmError):
    """Parameters became non-finite during training."""


class DuplicateRatingWarning(UserWarning):
    """A (user, item) pair appeared more than once; only one entry is kept."""
