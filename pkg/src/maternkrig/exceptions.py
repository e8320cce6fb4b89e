"""Exception types raised by maternkrig."""


class MaternKrigError(Exception):
    """Base class for package-specific errors."""


class FactorizationError(MaternKrigError, ArithmeticError):
    """A correlation matrix could not be Cholesky-factorized."""


class ConvergenceError(MaternKrigError, RuntimeError):
    """An iterative numerical routine failed to converge."""


class DegenerateDataError(MaternKrigError, ValueError):
    """Observations are degenerate (for example identically zero)."""


class ExperimentError(MaternKrigError, RuntimeError):
    """A Monte Carlo experiment could not be completed reliably."""
