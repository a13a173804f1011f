"""Exception hierarchy.

Input-type problems derive from :class:`InputError` (CLI exit code 2); solver
and stopping failures derive from :class:`NumericalError` (CLI exit code 3).
"""

from __future__ import annotations


class WCTransferError(Exception):
    """Base class for all package errors."""


class InputError(WCTransferError, ValueError):
    pass


class DimensionError(InputError):
    pass


class EmptyInputError(InputError):
    pass


class ConfigError(InputError):
    pass


class DomainError(InputError):
    pass


class CapacityError(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ZeroSupportError(InputError):
    """A sample landed on a state the proposal distribution gives zero mass."""


class UndefinedCorrelationError(InputError):
    pass


class NumericalError(WCTransferError, ArithmeticError):
    pass


class InsufficientDataError(NumericalError):
    pass


class SolverError(NumericalError):
    pass
