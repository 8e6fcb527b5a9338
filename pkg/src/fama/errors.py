"""Exception hierarchy and warning categories.

Every error carries an ``exit_code`` so the command line layer can map
failures onto its stable contract: 2 usage error, 3 data error, 4 numeric
failure.
"""


class FamaError(Exception):
    exit_code = 4


class UsageError(FamaError):
    """Caller passed arguments outside the documented domain."""

    exit_code = 2


class DataError(FamaError):
    """Input data violates a structural requirement."""

    exit_code = 3


class NumericError(FamaError):
    """A numerically degenerate state was detected mid-computation."""

    exit_code = 4


# -- data errors ---------------------------------------------------------

class DimensionMismatch(DataError):
    pass


class NonFiniteEntry(DataError):
    pass


class EmptyView(DataError):
    pass


class ParseError(DataError):
    def __init__(self, path, line, col, message):
        super().__init__(f"{path}:{line}:{col}: {message}")
        self.path = path
        self.line = line
        self.col = col


class RowCountMismatch(DataError):
    pass


class ConstantColumn(DataError):
    pass


class ZeroMatrix(DataError):
    pass


# -- usage errors --------------------------------------------------------

class RankTooLarge(UsageError):
    pass


class IndexOutOfRange(UsageError):
    pass


class InvalidRange(UsageError):
    pass


class InfeasibleAssignment(UsageError):
    pass


class ZeroTruth(UsageError):
    pass


# -- numeric errors ------------------------------------------------------

class ConvergenceFailure(NumericError):
    pass


class DegenerateVariance(NumericError):
    pass


class NonOrthogonalFactors(NumericError):
    pass


class NegativeDelta(NumericError):
    pass


class SingularCore(NumericError):
    pass


class DegenerateInput(NumericError):
    pass


class DegenerateNu(NumericError):
    pass


# -- warnings ------------------------------------------------------------

class FamaWarning(UserWarning):
    pass


class DegenerateVarianceWarning(FamaWarning):
    """A residual variance hit the numeric floor and was clipped."""


class RankSelectionWarning(FamaWarning):
    """The global-rank gap rule had to fall back to its upper bound."""
