"""Exceptions and warnings raised by the explained-variance library."""


class ExpVarError(Exception):
    """Base class for every library error."""


class InvalidInput(ExpVarError, ValueError):
    """Input fails validation: shape, finiteness, unit norm, weights, config."""


class RankDeficient(ExpVarError):
    """A matrix that must have full column rank does not."""


class DegenerateBasis(ExpVarError):
    """The change of basis M with Y = X M is singular, or A T does not reproduce X."""


class InvariantViolation(ExpVarError):
    """A proven bound or a monotonicity guarantee failed numerically."""


class NonConverged(ExpVarError):
    """An iterative scheme hit its iteration budget.

    The last iterate (or partial solution) is kept on ``result``.
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class DegenerateSpectrumWarning(UserWarning):
    """Leading singular values are (numerically) repeated; maximizers are not unique."""


class WitnessNotFound(ExpVarError):
    """A demonstration could not construct or find its witness within budget."""
