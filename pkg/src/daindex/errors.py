"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: validation problems exit with 2,
numerical degeneracy with 3.
"""


class DAIndexError(Exception):
    """Base class for every error raised deliberately by this package."""


class ValidationError(DAIndexError, ValueError):
    """Input data or configuration violates a documented contract."""


class ParseError(ValidationError):
    """A cohort or spec file could not be parsed."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DegeneracyError(DAIndexError, ArithmeticError):
    """A numerical quantity is undefined or explosive for this input."""


class InsufficientDataError(DegeneracyError):
    """Too few observations to estimate the requested quantity."""

    def __init__(self, message, n=None):
        self.n = n
        super().__init__(message)
