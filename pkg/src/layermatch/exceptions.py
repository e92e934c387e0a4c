"""Exception types shared across the package."""


class LoadError(ValueError):
    """A dataset file failed validation (shape, parse, missing)."""


class NumericError(RuntimeError):
    """Training or a solver produced non-finite or divergent values."""
