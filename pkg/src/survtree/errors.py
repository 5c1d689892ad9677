"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 3, FitError -> 4.
"""


class DataError(ValueError):
    """Bad input data: unreadable files, schema mismatches, domain violations."""


class FitError(RuntimeError):
    """Tree fitting cannot proceed: no events, invalid config, unusable covariate."""
