"""Exception types shared across the package."""


class FlowINRError(Exception):
    """Base class for all package errors."""


class DimensionError(FlowINRError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(FlowINRError, ValueError):
    """An argument lies outside the domain of an operation."""


class ContractError(FlowINRError, ValueError):
    """A caller violated an operation's precondition."""


class UnsupportedOperationError(FlowINRError, NotImplementedError):
    """A graph node has no rule for the requested kind of differentiation."""


class ConfigurationError(FlowINRError, ValueError):
    """Invalid or inconsistent configuration."""


class NumericalError(FlowINRError, ArithmeticError):
    """A computation produced non-finite values."""


class FormatError(FlowINRError, OSError):
    """A file does not follow the expected container layout."""
