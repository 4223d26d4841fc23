"""Exception hierarchy.

Three branches map onto CLI exit codes: configuration problems (exit 2),
data problems (exit 3), and numeric failures (exit 4).
"""


class GeosepError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GeosepError):
    """Invalid configuration or flag combination. CLI exit code 2."""


class ParameterError(ConfigError):
    """An operation parameter is out of its valid range."""


class DataError(GeosepError):
    """Malformed, inconsistent, or insufficient input data. CLI exit code 3."""


class ParseError(DataError):
    """A dataset or prediction file does not conform to its format."""


class TooFewRows(DataError):
    """Dataset is too small for the requested operation."""


class DimensionError(DataError):
    """Vector or matrix dimensions do not match."""


class ShapeError(DataError):
    """Image shape metadata is missing or incompatible."""


class EmptyClassSet(DataError):
    """No training rows carry the requested class label."""


class EmptyComplement(DataError):
    """All training rows carry the requested class label."""


class DegenerateTriple(DataError):
    """The near and far points of a zone triple coincide."""


class OrderingError(DataError):
    """The near point is not strictly closer than the far point."""


class EmptyInput(DataError):
    """An operation received an empty sequence."""


class RangeError(DataError):
    """A confidence value lies outside [0, 1]."""


class MissingSignal(DataError):
    """A requested signal column is absent from the input files."""


class ReductionTooAggressive(DataError):
    """The reduction parameter would leave no features or rows."""


class NumericError(GeosepError):
    """A numeric computation produced non-finite results. CLI exit code 4."""


class StageError(GeosepError):
    """A pipeline stage failed; wraps the original error with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
