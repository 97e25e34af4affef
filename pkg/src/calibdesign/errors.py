"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class CalibError(Exception):
    """Base class for every error raised by calibdesign."""

    exit_code = 1


class InputError(CalibError, ValueError):
    """Malformed or dimensionally inconsistent input."""

    exit_code = 2


class ModelFormatError(InputError):
    """A model/plan/measurement file failed to parse."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class NumericalError(CalibError, ArithmeticError):
    """A numerical evaluation produced non-finite values."""

    exit_code = 3

    def __init__(self, message: str, parameter: str | None = None):
        self.parameter = parameter
        super().__init__(message)


class IdentifiabilityError(CalibError):
    """The stacked identification Jacobian is rank deficient.

    ``null_space`` holds one row per detected null direction, expressed in
    the identifiable-parameter coordinates.
    """

    exit_code = 3

    def __init__(self, message: str, null_space=None, names=None):
        self.null_space = null_space
        self.names = names
        super().__init__(message)


class ConvergenceError(CalibError):
    """Iterative identification did not reach the requested tolerance."""

    exit_code = 3

    def __init__(self, message: str, history=None):
        self.history = list(history or [])
        super().__init__(message)


class InfeasibleError(CalibError):
    """No candidate plan yields an invertible information matrix."""

    exit_code = 3


class CampaignError(CalibError):
    """Too many Monte Carlo trials failed identification."""

    exit_code = 3
