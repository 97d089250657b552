"""Exception hierarchy.

Configuration problems and numerical failures are kept apart so the CLI can
map them onto distinct exit codes.
"""


class CombBellError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CombBellError, ValueError):
    """Invalid or inconsistent user configuration."""


class RangeError(ConfigurationError):
    """A parameter lies outside its allowed domain."""


class DimensionError(CombBellError, ValueError):
    """Array shapes or mode indices do not match."""


class NumericalError(CombBellError, ArithmeticError):
    """A computation could not be carried out reliably."""


class DegenerateSourceError(NumericalError):
    """The coupling matrix has no squeezing (leading eigenvalue is zero)."""


class CovarianceError(NumericalError):
    """A covariance matrix is singular, indefinite or ill conditioned."""


class UnphysicalHeraldingError(NumericalError):
    """The heralding event has zero (or negative) probability."""


class EmptyPixelError(NumericalError):
    """A pixel receives no local-oscillator weight."""


class OrthantAccuracyError(NumericalError):
    """The orthant integrator missed its accuracy target.

    The best available estimate and its error bound are attached.
    """

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
