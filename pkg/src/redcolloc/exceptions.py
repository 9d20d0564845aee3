"""Exception hierarchy for reduced collocation models."""


class RedCollocError(Exception):
    """Base class for all errors raised by this package."""


class InvalidOrderError(RedCollocError, ValueError):
    """Polynomial order or derivative order outside the supported range."""


class ShapeError(RedCollocError, ValueError):
    """Array dimensions do not match the grid or basis they refer to."""


class DomainError(RedCollocError, ValueError):
    """A spatial point or parameter lies outside its admissible domain."""


class SolverError(RedCollocError, RuntimeError):
    """A truth or reduced linear solve failed.

    Parameters
    ----------
    message : str
        Human readable description.
    mu : array-like, optional
        Parameter value at which the failure happened.
    """

    def __init__(self, message, mu=None):
        self.mu = None if mu is None else tuple(float(m) for m in mu)
        if self.mu is not None:
            message = f"{message} (mu={self.mu})"
        super().__init__(message)


class IllConditionedModelError(SolverError):
    """Normal equations of a least squares model could not be factorized."""


class SingularSystemError(SolverError):
    """Square reduced collocation system is numerically singular."""


class DegenerateBasisError(RedCollocError, ArithmeticError):
    """A new snapshot lies numerically in the span of the existing basis."""


class NumericalInconsistencyError(RedCollocError, ArithmeticError):
    """Decomposed residual radicand is negative beyond roundoff."""


class InvalidStabilityError(RedCollocError, ValueError):
    """Stability lower bound is not strictly positive."""


class ArtifactError(RedCollocError, ValueError):
    """Model artifact is malformed or has an unsupported format version."""
