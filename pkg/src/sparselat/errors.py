"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SparselatError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(SparselatError):
    """Invalid user-supplied parameters (bad rule, bad config key, collisions)."""


class SpectralParameterError(SparselatError):
    """Spectral parameter z too close to the essential spectrum [0, 4d]."""


class AccuracyError(SparselatError):
    """A quadrature or expansion failed to converge within its configured cap."""


class ResonanceError(SparselatError):
    """The single-site factor 1 + G(lam; 0) V(n) is (numerically) zero at `site`."""

    def __init__(self, message: str, site=None, lam=None):
        super().__init__(message)
        self.site = site
        self.lam = lam


class RegularityError(SparselatError):
    """Level-curve chart violates the gradient or curvature regularity bounds."""


class NoBoundStateError(SparselatError):
    """The impurity equation has no root in the admissible bracket."""


class GeometryError(SparselatError):
    """A requested local box does not fit inside the configured global box."""


class WavefrontError(SparselatError):
    """Time grid would let the free wavefront reach the box boundary."""


class SolverError(SparselatError):
    """A linear or eigenvalue solver failed to reach its residual target."""
