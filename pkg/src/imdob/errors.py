"""Exception types raised across the package."""


class ImdobError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ImdobError, ValueError):
    pass


class SpectraOverlap(ImdobError):
    """Sylvester operator is singular: the two spectra (nearly) intersect."""


class NotHurwitz(ImdobError):
    pass


class NoConvergence(ImdobError):
    pass


class NotSymmetric(ImdobError, ValueError):
    pass


class DuplicateFrequency(ImdobError, ValueError):
    pass


class WindowTooShort(ImdobError, ValueError):
    pass


class NonMonotoneTime(ImdobError, ValueError):
    pass


class OddSpectrum(ImdobError):
    """Eigenvalue count left after zero-mode removal cannot be paired."""


class NonFiniteDerivative(ImdobError, FloatingPointError):
    pass


class SingularInertia(ImdobError):
    pass


class EmptyTrace(ImdobError, ValueError):
    pass


class ConfigError(ImdobError, ValueError):
    """Invalid scenario configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
