"""Exception types raised across the package."""


class MagPolyaError(Exception):
    """Base class for all package errors."""


class DomainError(MagPolyaError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateDomainError(MagPolyaError, ValueError):
    """A rasterized domain has no interior cells or sites."""


class ConfigurationError(MagPolyaError, ValueError):
    """Inconsistent discretization or experiment configuration."""


class DataError(MagPolyaError, ValueError):
    """Tabulated input violates a stated property (e.g. convexity)."""


class ContractError(MagPolyaError, RuntimeError):
    """A precondition on a computed object (slice, certificate) is not met."""


class ApplicabilityError(MagPolyaError, ValueError):
    """A bound family was requested outside its validity range."""


class NumericalError(MagPolyaError, ArithmeticError):
    """A factorization or eigensolve failed after all retries."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
