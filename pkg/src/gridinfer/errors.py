"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GridInferError(Exception):
    """Base class for all package errors."""


class ConfigError(GridInferError, ValueError):
    """Invalid user configuration (maps to CLI exit code 2)."""


class GridError(GridInferError, ValueError):
    """Malformed network: bad bus references, duplicate lines, islands."""


class DataError(GridInferError, ValueError):
    """Malformed observation data."""


class CsvFormatError(DataError):
    """Parse failure with a precise location in the source file.

    ``row`` is the 1-based line number in the file (header is line 1) and
    ``column`` the header name, or the 1-based column position when the
    header itself is at fault.
    """

    def __init__(self, message: str, row: int | None = None, column: str | int | None = None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)


class NumericalError(GridInferError, RuntimeError):
    """Numerical failure (maps to CLI exit code 3)."""


class FitError(NumericalError):
    """Regression or curve fit could not be carried out."""


class PowerFlowError(NumericalError):
    """Power-flow solve failed."""


class SingularJacobianError(PowerFlowError):
    """Newton step impossible: Jacobian pivot below threshold."""
