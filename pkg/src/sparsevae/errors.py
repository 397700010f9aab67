"""Exception types shared across the package."""


class SparseVaeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SparseVaeError, ValueError):
    """Tensor shapes do not line up."""


class UsageError(SparseVaeError, RuntimeError):
    """An API was called in an invalid order or state."""


class DataError(SparseVaeError, ValueError):
    """Input data violates a declared contract (kinds, labels, simplex...)."""


class IngestionError(DataError):
    """A file could not be turned into a dataset."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(SparseVaeError, ValueError):
    """A configuration value is out of range or inconsistent.

    ``problems`` holds every issue found, so callers can report all of them
    at once instead of fixing one at a time.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class TrainingError(SparseVaeError, RuntimeError):
    """Optimization produced a non-finite loss."""
