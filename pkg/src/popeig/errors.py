"""Exception hierarchy.

Two families: :class:`InputError` for bad configurations or data and
:class:`NumericalError` for solver failures. The CLI maps them to exit
codes 3 and 4.
"""


class PopEigError(Exception):
    """Base class for every error raised by this package."""


class InputError(PopEigError, ValueError):
    pass


class NumericalError(PopEigError, ArithmeticError):
    pass


# model / input validation
class NonPositiveEigenvalue(InputError):
    pass


class DuplicateEigenvalue(InputError):
    pass


class MultiplicitySumMismatch(InputError):
    pass


class SampleCountTooSmall(InputError):
    pass


class EmptyData(InputError):
    pass


class DataParseError(InputError):
    pass


class OverlapAfterMargin(InputError):
    pass


class InvalidProbability(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class EigenvalueCollision(InputError):
    pass


# numerical failures
class ConvergenceFailure(NumericalError):
    pass


class PoleHit(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class WrongBranch(NumericalError):
    pass


class SeparabilityViolated(NumericalError):
    pass


class RootBracketingFailure(NumericalError):
    pass


class MethodDisagreement(NumericalError):
    pass


class CoincidentPoints(NumericalError):
    pass


class NonRealResult(NumericalError):
    pass


class QuadratureNonConvergence(NumericalError):
    pass


class ZeroDerivativeAtRoot(NumericalError):
    pass


class AllTrialsFailed(NumericalError):
    pass
