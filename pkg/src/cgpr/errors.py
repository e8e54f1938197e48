"""Exception types shared across the package."""

import numpy as np


class DimensionMismatch(ValueError):
    """Operand shapes are incompatible."""


class NotHermitian(ValueError):
    """A matrix expected to be Hermitian is not, within tolerance."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Cholesky pivot (or Schur complement) was not strictly positive.

    ``params`` optionally carries the hyperparameters that produced the
    offending matrix, so optimizers can report where they failed.
    """

    def __init__(self, message, params=None):
        super().__init__(message)
        self.params = params


class UnknownHyperparameter(KeyError):
    """A hyperparameter id is not read by the kernel kind in use."""


class KernelOverflowWarning(RuntimeWarning):
    """Kernel exponent exceeded the float64 range; values are inf/nan."""


class ConfigError(ValueError):
    """An experiment configuration is malformed."""
