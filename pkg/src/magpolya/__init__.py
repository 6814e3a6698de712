"""Magnetic Pólya-type spectral bounds: Landau-level symbols, Peierls lattices and certified spectra."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ApplicabilityError,
    ConfigurationError,
    ContractError,
    DataError,
    DegenerateDomainError,
    DomainError,
    MagPolyaError,
    NumericalError,
)

__all__ = [
    "__version__",
    "ApplicabilityError",
    "ConfigurationError",
    "ContractError",
    "DataError",
    "DegenerateDomainError",
    "DomainError",
    "MagPolyaError",
    "NumericalError",
]
