"""
sdq_errors.py
Exception hierarchy for the SDQ optimization toolkit.

Every failure raised by the package derives from SdqError so callers can
catch package errors in one place. Outcomes that are not failures (a
converged direction, a skipped curvature pair) are returned as None
instead of being raised.

Version: 1.0.0
"""

from typing import Optional


class SdqError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SdqError, ValueError):
    """An argument is non-finite, out of range or has the wrong shape."""


class DegenerateStepError(InvalidInputError):
    """The iterate displacement s is zero or non-finite; no pair can be formed."""


class NumericalFailureError(SdqError, ArithmeticError):
    """
    A computation produced non-finite values.

    When raised by an optimizer step, `iteration`, `objective` and
    `grad_norm` describe the offending iteration so the caller can record it.
    """

    def __init__(self, message: str, iteration: Optional[int] = None,
                 objective: float = float('nan'), grad_norm: float = float('nan')):
        super().__init__(message)
        self.iteration = iteration
        self.objective = objective
        self.grad_norm = grad_norm


class InvalidConfigError(SdqError, ValueError):
    """A configuration value is inconsistent with the data or other settings."""


class UsageError(InvalidConfigError):
    """A command-line flag is unknown or carries an invalid value."""

    def __init__(self, message: str, flag: Optional[str] = None):
        super().__init__(message)
        self.flag = flag


class DataFormatError(SdqError, ValueError):
    """A data file does not follow the expected binary layout."""

    def __init__(self, message: str, offset: Optional[int] = None,
                 expected: Optional[int] = None, found: Optional[int] = None):
        super().__init__(message)
        self.offset = offset
        self.expected = expected
        self.found = found


class DataLengthError(DataFormatError):
    """A data file is shorter than its header announces."""


class DataConsistencyError(DataFormatError):
    """Paired data files disagree (e.g. image and label counts differ)."""
