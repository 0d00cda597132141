"""Exception types raised across the package.

Invalid arguments raise plain :class:`ValueError`; the classes below mark
the failure modes callers may want to catch separately.
"""

import numpy as np


class SingularGramError(np.linalg.LinAlgError):
    """The matching Gram matrix is not invertible at this dimension."""


class DegenerateRealizationError(ArithmeticError):
    """A product lost rank (an exact zero on a triangular diagonal)."""


class DegenerateVarianceError(ValueError):
    """Standardization requested for an ensemble with zero variance."""


class UndefinedBoundError(ValueError):
    """A closed-form bound is undefined at these parameters."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
