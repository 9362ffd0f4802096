"""Exception hierarchy shared by the switchmargin modules."""


class SwitchMarginError(Exception):
    """Base class for all errors raised by switchmargin."""


class NotHurwitzError(SwitchMarginError):
    """The nominal matrix A has an eigenvalue with non-negative real part."""


class DimensionCapError(SwitchMarginError):
    """A hierarchy level would exceed the configured reduced-dimension cap."""


class InvariantSubspaceError(SwitchMarginError):
    """An operator passed to ``reduce`` does not preserve the symmetric subspace."""


class IntegrationError(SwitchMarginError):
    """The ODE integrator failed, or the event counter cap was hit."""


class SweepExhaustedError(SwitchMarginError):
    """The upper-bound sweep reached its cap without finding a witness."""

    def __init__(self, message, last_delta):
        super().__init__(message)
        self.last_delta = last_delta
