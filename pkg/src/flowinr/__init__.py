"""Joint reconstruction of dynamic MR images and motion with optical-flow-coupled coordinate networks."""

from .errors import (ConfigurationError, ContractError, DimensionError, DomainError, FlowINRError,
                     FormatError, NumericalError, UnsupportedOperationError)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ContractError", "DimensionError", "DomainError", "FlowINRError",
    "FormatError", "NumericalError", "UnsupportedOperationError", "__version__",
]
