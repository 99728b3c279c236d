"""Exception hierarchy.

Data problems (bad files, unusable samples) derive from :class:`DataError`,
numerical breakdowns from :class:`NumericalError`. The CLI maps the two
families to distinct exit codes.
"""


class NrcError(Exception):
    """Base class for every error raised by this package."""


class DataError(NrcError):
    pass


class NumericalError(NrcError):
    pass


class ConfigError(NrcError, ValueError):
    """Invalid hyperparameters or experiment settings."""


class DimensionMismatch(NrcError, ValueError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class TooManyColumns(NrcError, ValueError):
    pass


class BadDimension(NrcError, ValueError):
    pass


class ZeroNormSample(DataError):
    pass


class ZeroNormQuery(DataError):
    pass


class EmptyClass(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class BadMagic(DataError):
    pass


class TruncatedFile(DataError):
    pass


class UnsupportedElementType(DataError):
    pass


class RaggedRow(DataError):
    pass


class NonNumericField(DataError):
    pass


class FormatError(DataError):
    """A serialized model or report could not be decoded."""
