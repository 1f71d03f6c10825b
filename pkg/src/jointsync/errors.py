"""Exception hierarchy shared by all modules."""


class JointSyncError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(JointSyncError, ValueError):
    """An argument lies outside the valid domain (bad node id, nonpositive skew, ...)."""


class IdentifiabilityError(JointSyncError):
    """The data cannot determine the requested parameters uniquely."""


class UnderdeterminedError(IdentifiabilityError):
    """Fewer observations than unknowns."""


class ConnectivityError(IdentifiabilityError):
    """The link graph does not connect every node to the rest of the network."""


class SingularSystemError(IdentifiabilityError):
    """The (scaled) system matrix is numerically rank deficient."""

    def __init__(self, message: str, cond: float = float("inf"), columns: tuple[str, ...] = ()):
        super().__init__(message)
        self.cond = cond
        self.columns = columns


class NumericalError(JointSyncError):
    """A solve finished but failed its own accuracy postcondition."""
