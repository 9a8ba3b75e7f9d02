"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class PLCopulaError(Exception):
    pass


class ConfigError(PLCopulaError):
    """Invalid configuration, hyperparameters, or incompatible components."""


class DataError(PLCopulaError):
    """Rejected input data (non-finite values, shape mismatch, bad schema)."""


class NumericError(PLCopulaError):
    """Numerical failure (non-convergence, degenerate posterior, failed bracket)."""


class UnknownLevelError(DataError):
    """Categorical level seen at predict time that was absent when the schema was fitted."""

    def __init__(self, column, level):
        self.column = column
        self.level = level
        super().__init__(f"unknown level {level!r} in column {column!r}")


class UnsupportedDensityError(ConfigError):
    """The chosen marginal has no density (empirical CDF / bootstrap)."""


class ConvergenceError(NumericError):
    """Optimizer did not converge; carries the last iterate for diagnosis."""

    def __init__(self, message, last_beta=None, grad_norm=None):
        self.last_beta = last_beta
        self.grad_norm = grad_norm
        super().__init__(message)


class DegeneratePosteriorError(NumericError):
    """A posterior marginal has zero variance where a spread is required."""
