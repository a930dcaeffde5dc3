"""Exception hierarchy shared across the package."""


class AggMBFGSError(Exception):
    """Base class for all package errors."""


class NotPositiveDiagonal(AggMBFGSError, ValueError):
    pass


class NumericalDowndateFailure(AggMBFGSError, ArithmeticError):
    """Downdated matrix is indefinite beyond tolerance (corrupted store)."""


class ZeroDisplacement(AggMBFGSError, ValueError):
    pass


class RankDeficient(AggMBFGSError, ArithmeticError):
    pass


class NotSPD(AggMBFGSError, ArithmeticError):
    pass


class DegenerateCurvature(AggMBFGSError, ArithmeticError):
    """s'ybar is not safely positive; the pair must not be stored."""


class SingularBbar(AggMBFGSError, ArithmeticError):
    pass


class AggregationFailure(AggMBFGSError, ArithmeticError):
    """Aggregation could not produce a valid set of gradient displacements."""


class NegativeDiscriminant(AggregationFailure):
    pass


class NotDescent(AggMBFGSError, ValueError):
    pass


class LineSearchFailure(AggMBFGSError, ArithmeticError):
    pass


class UnknownProblem(AggMBFGSError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InvalidDimension(AggMBFGSError, ValueError):
    pass
