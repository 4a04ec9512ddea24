"""Exception hierarchy.

Every error raised by the package derives from :class:`AcoustomechError`.
The three intermediate classes map onto the CLI exit codes.
"""


class AcoustomechError(Exception):
    exit_code = 1


class ConfigError(AcoustomechError, ValueError):
    exit_code = 2


class PhysicsDomainError(AcoustomechError, ValueError):
    exit_code = 3


class NumericalError(AcoustomechError, RuntimeError):
    exit_code = 4


# circuit
class GapClosureError(PhysicsDomainError):
    pass


class OverlappingModesError(PhysicsDomainError):
    pass


class FitNonConvergenceError(NumericalError):
    pass


class StepTooSmallError(NumericalError):
    pass


# linear response
class GridTooCoarseError(PhysicsDomainError):
    pass


# nonlinear dynamics
class InstabilityError(NumericalError):
    pass


class StepTooLargeError(NumericalError):
    pass


class TransientNotSettledError(NumericalError):
    pass


class TruncationBoundError(PhysicsDomainError):
    pass


# fitting
class NonFiniteResidualError(NumericalError):
    pass


class MultiDipError(PhysicsDomainError):
    pass


class BackgroundDominatedError(PhysicsDomainError):
    pass


class NonDecayingTraceError(PhysicsDomainError):
    pass


class WindowUnresolvedError(PhysicsDomainError):
    pass


class DegenerateFitError(NumericalError):
    pass


class ValidityWarning(UserWarning):
    """A formula is being evaluated outside the regime it was derived for."""


class PhaseUnwrapWarning(UserWarning):
    pass
