"""Exception types shared across the package."""


class AfiPinnError(Exception):
    """Base class for all package errors."""


class ConfigError(AfiPinnError, ValueError):
    """Invalid configuration value or combination of values."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractError(AfiPinnError, ValueError):
    """A caller violated an operation's precondition."""


class NumericalError(AfiPinnError, ArithmeticError):
    """A non-finite value appeared where a finite one is required.

    ``index`` and ``point`` identify the offending sample when known.
    """

    def __init__(self, message, index=None, point=None):
        self.index = index
        self.point = None if point is None else tuple(float(v) for v in point)
        if index is not None:
            message = f"{message} (index {index}, point {self.point})"
        super().__init__(message)
