"""Exception hierarchy.

Data problems derive from ``DataError`` and numerical breakdowns from
``NumericalError`` so the CLI can map them onto distinct exit codes.
"""


class LnnForecastError(Exception):
    pass


class DataError(LnnForecastError):
    pass


class NumericalError(LnnForecastError):
    pass


# numerics
class SingularSystem(NumericalError):
    pass


class DegenerateSeries(NumericalError):
    pass


# cells
class ShapeMismatch(LnnForecastError, ValueError):
    pass


class NonPositiveGap(LnnForecastError, ValueError):
    pass


class WindowLengthMismatch(ShapeMismatch):
    pass


# training
class EmptyBatch(LnnForecastError, ValueError):
    pass


class NonFiniteForward(NumericalError):
    pass


class AllBatchesSkipped(NumericalError):
    pass


# baseline / dataset
class InsufficientHistory(DataError):
    pass


class UnparseableDate(DataError):
    pass


class DuplicateDateWithinSource(DataError):
    pass


class EmptyJoin(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class MissingExpectedColumn(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class RangeTooShort(DataError):
    pass


# protocol
class NoValidConfig(NumericalError):
    pass


class SpanTooShort(DataError):
    pass


# bootstrap / metrics
class TooFewResiduals(DataError):
    pass


class EmptyPairs(DataError):
    pass


class UndefinedCorrelation(NumericalError):
    pass


class ZeroVarianceErrors(NumericalError):
    pass
