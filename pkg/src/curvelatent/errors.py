"""Exception hierarchy.

Errors fall in three families that the CLI maps to exit codes:
configuration problems, data problems and numerical failures.
"""

from __future__ import annotations


class CurveLatentError(Exception):
    """Base class for all package errors."""


class ConfigError(CurveLatentError):
    pass


class DataError(CurveLatentError):
    pass


class NumericalError(CurveLatentError):
    pass


class MalformedLine(DataError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class NonMonotoneCurve(DataError):
    def __init__(self, timestamp, kind):
        self.timestamp = timestamp
        self.kind = kind
        super().__init__(f"{kind.name.lower()} curve at {timestamp} is not monotone in price")


class DuplicateVolume(DataError):
    def __init__(self, timestamp, kind):
        self.timestamp = timestamp
        self.kind = kind
        super().__init__(f"{kind.name.lower()} curve at {timestamp} repeats a cumulative volume")


class MissingPair(DataError):
    def __init__(self, timestamp):
        self.timestamp = timestamp
        super().__init__(f"hour {timestamp} has only one of supply/demand")


class NoIntersection(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class EmptyInput(DataError):
    pass


class ZeroDenominator(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NonPositiveSpectrum(NumericalError):
    pass


class Diverged(NumericalError):
    pass


class AllPointsFailed(NumericalError):
    pass


class EmptyModel(CurveLatentError):
    """A reducer was used before ``fit``."""


class DegenerateColumnWarning(UserWarning):
    """A training column has zero variance; its scale is replaced by 1."""
