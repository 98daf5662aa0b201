"""Exception types raised by the solver."""


class InvalidArgumentError(ValueError):
    pass


class DomainError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class CompatibilityError(ValueError):
    """Pure-Neumann right-hand side with nonzero mean beyond roundoff."""


class InternalError(RuntimeError):
    pass


class SolverError(RuntimeError):
    """Linear solve did not reach the requested tolerance.

    The ``report`` attribute carries the :class:`~vehd.linalg.SolverReport`.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
