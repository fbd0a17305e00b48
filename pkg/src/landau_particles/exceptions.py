"""Exception hierarchy.

Validation problems derive from :class:`ValueError`; numerical breakdowns
from :class:`ArithmeticError`.  The CLI maps the two families to distinct
exit codes.
"""


class LandauError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(LandauError, ValueError):
    pass


class NonNormalizedWeights(ValidationError):
    pass


class NonFiniteCoordinate(ValidationError):
    pass


class EmptyEnsemble(ValidationError):
    pass


class CoincidentParticles(ValidationError):
    pass


class GammaOutOfRange(ValidationError):
    pass


class NonPositiveEpsilon(ValidationError):
    pass


class BadDimension(ValidationError):
    pass


class IncompatibleDimension(ValidationError):
    pass


class ZeroVector(ValidationError):
    pass


class SingleParticle(ValidationError):
    pass


class BadSpec(ValidationError):
    """Malformed initial-condition or run configuration."""


class FileFormatError(ValidationError):
    pass


class StaleScore(LandauError):
    """Score field and ensemble carry different time stamps."""


class NumericalError(LandauError, ArithmeticError):
    pass


class StepUnderflow(NumericalError):
    """Adaptive step collapsed, or the state stopped being finite.

    ``time`` is the last time successfully reached and ``trajectory`` the
    partial trajectory, when available.
    """

    def __init__(self, message, time=None, trajectory=None):
        super().__init__(message)
        self.time = time
        self.trajectory = trajectory


class QuadratureUnderResolved(NumericalError):
    pass


class UnsupportedWeightsWarning(UserWarning):
    """Exact transport solver not applicable; a sliced estimate was used."""
