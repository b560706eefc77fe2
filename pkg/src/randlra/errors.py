"""Exception hierarchy shared by all modules."""


class RandLRAError(Exception):
    """Base class for every error raised by randlra."""


class ArgumentError(RandLRAError, ValueError):
    """Invalid parameters or dimension mismatch."""


class BudgetError(ArgumentError):
    """No feasible oversampling plan fits the requested budget."""


class NumericError(RandLRAError, ArithmeticError):
    """A numerical kernel failed (non-convergence, breakdown)."""


class DefinitenessError(NumericError):
    """Cholesky factorization met a non-positive pivot."""


class DegenerateSpectrumError(NumericError):
    """Post-processing would divide by a (numerically) zero singular value."""


class StreamError(RandLRAError):
    """A row stream was inconsistent or ended before covering every row."""


class FormatError(RandLRAError):
    """A spectrum or matrix file does not follow the expected format."""
