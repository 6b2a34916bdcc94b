"""Exception types shared across the package.

CLI exit-code mapping: DataError -> 2, NumericError -> 3, usage errors -> 1.
"""


class DataError(ValueError):
    """Invalid input data or arguments (bad ids, malformed files, empty classes)."""


class NumericError(RuntimeError):
    """Numeric failure during computation (divergence, non-finite loss)."""
