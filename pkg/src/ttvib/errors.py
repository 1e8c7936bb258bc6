"""Exception and warning types raised across the package."""

import numpy as np


class TTError(Exception):
    """Base class for all errors raised by ttvib."""


class ShapeMismatch(TTError, ValueError):
    pass


class IndexOutOfRange(TTError, IndexError):
    pass


class TooLarge(TTError, MemoryError):
    """A dense materialization would exceed the configured size guard."""


class NotPositiveDefinite(TTError, np.linalg.LinAlgError):
    """Cholesky met a pivot below the relative threshold."""


class FullyDegenerateMass(TTError, np.linalg.LinAlgError):
    """Every direction of the mass matrix was filtered out."""


class SingularSubmatrix(TTError, np.linalg.LinAlgError):
    pass


class LocalSolveFailure(TTError, np.linalg.LinAlgError):
    pass


class ClusterDiverged(TTError, RuntimeError):
    pass


class ConfigError(TTError, ValueError):
    pass


class NoConvergence(UserWarning):
    """Cross approximation stopped at the sweep cap without settling."""
