"""Exception hierarchy shared by all modules."""


class CadlagError(Exception):
    """Base class for domain errors raised by this package."""


class DomainError(CadlagError, ValueError):
    """A point or coordinate lies outside the unit cube."""


class EmptyData(CadlagError, ValueError):
    pass


class NormBudgetExceeded(CadlagError, ValueError):
    pass


class DegenerateScale(CadlagError, ValueError):
    """The budget equals |f(0)| while f is not constant."""


class UnknownFamily(CadlagError, ValueError):
    pass


class NotAMinimizer(CadlagError):
    """The reference function has larger risk than the candidate."""


class NonFinite(CadlagError, FloatingPointError):
    pass


class TooLarge(CadlagError, ValueError):
    pass


class InvalidEpsilon(CadlagError, ValueError):
    pass


class QuadratureFailure(CadlagError):
    pass


class BernsteinOverflow(CadlagError, OverflowError):
    """t * g is too large for exp(); the scale parameter is wrong for the data."""


class CertificationFailure(CadlagError):
    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = failures or []


class AuditViolation(CadlagError):
    """An audited inequality failed beyond its slack.

    ``payload`` is a JSON-serializable dict describing the failing
    inequality, both sides, the slack and the margin.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload or {}
