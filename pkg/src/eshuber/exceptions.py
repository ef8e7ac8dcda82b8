"""Exception hierarchy shared by the estimators and the CLI."""


class ESHError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParamsError(ESHError, ValueError):
    """A parameter set violates its invariants."""


class DegenerateSampleError(ESHError, ValueError):
    """The data cannot support the requested fit (too few values, zero spread)."""


class NumericalError(ESHError, ArithmeticError):
    """A linear system was singular or an iteration produced non-finite values."""


class SingularMatrixError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class DegenerateResidualError(DegenerateSampleError):
    """Every residual is zero, so the scale has nothing to estimate."""
