"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 1,
numerical failures exit 2.
"""


class MsmTrendError(Exception):
    """Base class for all package errors."""


class InvalidSpecError(MsmTrendError):
    """A model specification violates its structural constraints."""


class InvalidArgumentError(MsmTrendError):
    """An argument is outside the documented domain of an operation."""


class DataValidationError(MsmTrendError):
    """Input data violates the panel schema or its invariants."""


class NumericalError(MsmTrendError):
    """A numerical procedure failed (wrong curvature, degenerate variance...)."""


class CurvatureError(NumericalError):
    """The observed information has a significantly negative eigenvalue."""


class DegenerateVarianceError(NumericalError):
    """A prediction-error variance is not strictly positive."""
