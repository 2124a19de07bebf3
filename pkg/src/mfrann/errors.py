"""Exception types raised across the package."""


class NonFiniteError(ValueError):
    """An input or intermediate array contains NaN or infinity."""


class EmptyInputError(ValueError):
    """A design matrix or target vector has no rows or no columns."""


class DegenerateTruthsError(ValueError):
    """NRMSE is undefined because every reference value is identical."""


class InvalidDofError(ValueError):
    """Degrees of freedom are outside the range an operation supports."""


class InsufficientDataError(ValueError):
    """Too few observations for the requested posterior update."""


class UntrainedModelError(RuntimeError):
    """Prediction was requested from a network whose output layer is unset."""


class EnsembleCollapse(RuntimeError):
    """Fewer ensemble members survived stability filtering than required.

    Parameters
    ----------
    message : str
        Human readable diagnostic.
    dropped : list of (int, str)
        Member ids and drop reasons at the time of collapse.
    """

    def __init__(self, message, dropped=()):
        super().__init__(message)
        self.dropped = list(dropped)


class QuadratureFailure(RuntimeError):
    """Numerical integration did not reach the requested tolerance."""


class SingularCorrelation(RuntimeError):
    """Kriging correlation matrix stayed indefinite at the largest nugget."""
