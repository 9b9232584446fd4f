"""Exception and warning types shared across the package."""


class QsdError(Exception):
    """Base class for all package-specific errors."""


class ExtinctMassError(QsdError):
    """Conditioning is impossible: the surviving mass is numerically zero."""


class NotIrreducibleError(QsdError):
    """The jump graph is not strongly connected."""


class NoConvergenceError(QsdError):
    """Iteration budget exhausted before the residual target was met."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class EmptyDomainError(QsdError):
    """A domain required to be nonempty (e.g. the transitory set) is empty."""


class SingularSystemError(QsdError):
    """The escape-moment linear system is singular at the requested rate."""


class HorizonTooShortError(QsdError):
    """The requested horizon is below the persistence onset time."""


class InductionBrokenError(QsdError):
    """A coupling step violated its certified per-step bound.

    Carries the step index and the offending quantities for post-mortem.
    """

    def __init__(self, message, step=None, details=None):
        super().__init__(message)
        self.step = step
        self.details = dict(details or {})


class DominationViolatedError(QsdError):
    """An entrywise lower-bound check failed beyond the allowed slack."""


class AllExtinctError(QsdError):
    """Every simulated path died before the estimation time."""


class SchemaError(QsdError):
    """A configuration or artifact file does not match the expected schema."""


class DegenerateSpectrumWarning(UserWarning):
    """The two leading kernel eigenvalues coincide within tolerance."""
