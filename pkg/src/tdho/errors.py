"""Exception hierarchy shared by all modules."""


class TDHOError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TDHOError, ValueError):
    """An input lies outside the domain where an operation is defined."""


class ValidationError(TDHOError, ValueError):
    """A model, potential or config failed its construction-time checks."""


class PreconditionError(TDHOError, ValueError):
    """A state does not satisfy the precondition of an operation."""


class IntegrationError(TDHOError, RuntimeError):
    """The adaptive ODE integrator could not reach the requested tolerance."""


class ConvergenceError(TDHOError, RuntimeError):
    """A refinement or limiting procedure did not converge.

    ``report`` carries whatever partial result the procedure produced.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class FitError(TDHOError, RuntimeError):
    """Too few usable samples to fit a decay exponent."""
