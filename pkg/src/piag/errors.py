"""Exception hierarchy shared by the solver, the analysis helpers and the CLI."""


class PIAGError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PIAGError, ValueError):
    """A point or array has the wrong shape for the problem it is used with."""


class ParameterError(PIAGError, ValueError):
    """A scalar parameter (step size, constant, delay bound) is out of range."""


class CapabilityError(PIAGError):
    """The requested quantity needs ground-truth metadata the problem lacks."""


class ScheduleViolationError(PIAGError):
    """A delay vector asks for an iterate that is not (or no longer) stored."""


class InvalidCertificateError(PIAGError, ValueError):
    """Rate certificate with a contraction factor outside (0, 1)."""


class GenerationError(PIAGError, ValueError):
    """A synthetic problem could not be generated from the given data."""


class ValidationError(PIAGError):
    """A sampled check of a structural assumption (convexity, Lipschitz
    gradient, exact prox, quadratic growth) failed."""


class DivergenceError(PIAGError, ArithmeticError):
    """The iteration produced a non-finite iterate.

    Attributes
    ----------
    state : SolverState
        Last state whose iterate was finite.
    trace : ConvergenceTrace or None
        Rows recorded up to the failure, when raised from :func:`piag.solver.run`.
    """

    def __init__(self, message, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace
