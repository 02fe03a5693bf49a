"""Exception hierarchy.

Data problems (bad input files, impossible splits) derive from
:class:`DataError`; linear-algebra failures derive from :class:`NumericError`.
The CLI maps the two families to distinct exit codes.
"""


class KoopflowError(Exception):
    """Base class for all package errors."""


class DataError(KoopflowError, ValueError):
    pass


class NumericError(KoopflowError, ArithmeticError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SamplingError(DataError):
    """Timestamps are not uniformly spaced."""


class MissingDataError(DataError):
    pass


class SplitError(DataError):
    pass


class ShapeError(DataError):
    pass


class DelayError(DataError):
    pass


class InputError(DataError):
    pass


class DegenerateTruthError(DataError):
    """Ground truth has zero norm, relative error is undefined."""


class RankError(NumericError):
    pass


class ConditioningError(NumericError):
    pass


class EmptySpectrumError(NumericError):
    pass


class ModeOverflowError(NumericError, OverflowError):
    pass


class ModeOverflowWarning(RuntimeWarning):
    pass
