"""Two-step trend estimation for interval-censored multi-state panels.

Step one fits a misclassified three-state model by maximum likelihood and
extracts per-wave hazard shifters with their sampling covariance; step two
filters that series with a variance-constrained random-walk state-space
model, tests for drift, forecasts, and characterizes the filter's
small-sample gain, power and size behavior.
"""

from .errors import (
    CurvatureError,
    DataValidationError,
    DegenerateVarianceError,
    InvalidArgumentError,
    InvalidSpecError,
    MsmTrendError,
    NumericalError,
)

__version__ = "0.1.0"
