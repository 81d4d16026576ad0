"""Exception hierarchy shared by all weinfib modules."""


class WeinfibError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(WeinfibError, ValueError):
    """An operation was asked for something its inputs cannot provide."""


class DegreeError(WeinfibError, ValueError):
    """Form degree out of the range an operation accepts."""


class TopDegreeError(DegreeError):
    """``d`` requested on a top-degree form."""


class BackendError(WeinfibError, TypeError):
    """Wrong backend, or cochain and field forms mixed in one expression."""


class NonVerticalMapError(WeinfibError, ValueError):
    """A map that was declared vertical moves the base point."""


class CoverError(WeinfibError, ValueError):
    """Invalid base cover or partition of unity."""


class DomainError(WeinfibError, ValueError):
    """Evaluation outside a tubular or chart domain, or non-finite values."""


class NotLagrangianError(WeinfibError, ValueError):
    """A subbundle that must be Lagrangian is not."""

    def __init__(self, message, defect):
        super().__init__(message)
        self.defect = defect


class NonExactError(WeinfibError, ValueError):
    """A family of forms is not fibrewise exact."""

    def __init__(self, message, residual, samples):
        super().__init__(message)
        self.residual = residual
        self.samples = list(samples)


class SpectrumError(WeinfibError, ValueError):
    """Jacobian eigenvalues do not cluster at 0 and 1."""


class PolarisationError(WeinfibError, ValueError):
    """A declared polarisation fails one of its checks."""


class ChartDomainError(DomainError):
    """A subbundle leaves the image of a Weinstein chart."""

    def __init__(self, message, samples):
        super().__init__(message)
        self.samples = list(samples)


class InversionError(WeinfibError, ValueError):
    """A circle or torus map could not be inverted."""


class RankError(WeinfibError, ValueError):
    """A differential has lower rank than an operation requires."""
