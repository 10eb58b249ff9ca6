"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class SigmortError(Exception):
    exit_code = 1
    kind = "error"


class UsageError(SigmortError, ValueError):
    exit_code = 2
    kind = "usage"


class DataError(SigmortError, ValueError):
    """Malformed, missing or out-of-range input data."""

    exit_code = 3
    kind = "data"


class NumericError(SigmortError, ArithmeticError):
    """Divergence, singular systems and other numerical failures."""

    exit_code = 4
    kind = "numeric"
