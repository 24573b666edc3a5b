"""Exception hierarchy shared by the toolkit."""


class ProbeSchedError(Exception):
    """Base class for all toolkit errors."""


class InstanceError(ProbeSchedError, ValueError):
    """Malformed or invalid instance, schedule or parameter set."""


class ConvergenceError(ProbeSchedError, RuntimeError):
    """A solver stopped before meeting its tolerance."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
