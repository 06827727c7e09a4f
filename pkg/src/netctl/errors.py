"""Exception hierarchy shared by every netctl module."""


class NetctlError(Exception):
    """Base class for all library errors."""


class NumericalError(NetctlError):
    """A dense factorization failed or produced non-finite output."""


class DimensionError(NetctlError, ValueError):
    """Operands have incompatible shapes."""


class InvalidWeightError(NetctlError, ValueError):
    """A weighting matrix violates its definiteness requirement."""


class ReachabilityError(NetctlError):
    """The requested target is not in the range of the controllability matrix."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotControllableError(NetctlError):
    """The network is not output controllable in the requested horizon."""


class InfeasibleDataError(NetctlError):
    """The recorded experiments cannot reach the target (rank(Y_T) < p)."""

    def __init__(self, message, rank=None, required=None):
        super().__init__(message)
        self.rank = rank
        self.required = required


class PartialStateError(NetctlError, ValueError):
    """Identification requested from data that do not measure the full state."""


class ConvergenceError(NetctlError):
    """An iterative procedure exhausted its step budget."""
