"""Exception hierarchy shared by every stage of the pipeline."""


class ScalogramError(Exception):
    """Base class for all package errors."""


class DataError(ScalogramError):
    """Bad or inconsistent input data (maps to CLI exit code 2)."""


class MalformedName(DataError):
    pass


class ParseError(DataError):
    pass


class ConflictingDiagnosis(DataError):
    pass


class MissingAnnotation(DataError):
    pass


class UnsupportedAudio(DataError):
    pass


class InvalidBand(ScalogramError, ValueError):
    pass


class SampleRateMismatch(ScalogramError, ValueError):
    pass


class TooShort(ScalogramError, ValueError):
    pass


class InsufficientExtrema(ScalogramError, ValueError):
    pass


class EmptyImfSet(ScalogramError, ValueError):
    pass


class LengthMismatch(ScalogramError, ValueError):
    pass


class TooSmall(ScalogramError, ValueError):
    pass


class ExcludedClass(ScalogramError, ValueError):
    pass


class EmptyManifest(DataError):
    pass


class IndivisibleBatch(ScalogramError, ValueError):
    pass


class BadClassCount(ScalogramError, ValueError):
    pass


class ShapeMismatch(ScalogramError, ValueError):
    pass


class MissingCache(ScalogramError, RuntimeError):
    pass


class LabelOutOfRange(ScalogramError, ValueError):
    pass


class EmptyMatrix(ScalogramError, ValueError):
    pass


class ConfigError(ScalogramError):
    """Invalid run configuration (maps to CLI exit code 1)."""
