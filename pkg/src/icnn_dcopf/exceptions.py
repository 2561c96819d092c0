"""Exception types raised across the package."""


class DcopfError(Exception):
    """Base class for all package errors."""


class CaseError(DcopfError, ValueError):
    """Raised when a grid case violates its invariants."""


class DisconnectedGraph(CaseError):
    pass


class InconsistentFlows(DcopfError):
    pass


class InfeasibleError(DcopfError):
    """Raised when an LP has no feasible point."""


class UnboundedError(DcopfError):
    pass


class IterationLimit(DcopfError):
    pass


class TooLarge(DcopfError, ValueError):
    pass


class NoSolution(DcopfError):
    """Raised when a detected active set yields an inconsistent linear system."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class DimensionMismatch(DcopfError, ValueError):
    pass


class NonFiniteLoss(DcopfError):
    def __init__(self, message, batch=None):
        super().__init__(message)
        self.batch = batch


class PreconditionFailed(DcopfError):
    """A theorem's hypotheses are not met, so no assertion can be made."""


class DegenerateSpan(PreconditionFailed):
    pass


class InfeasibleRateTooHigh(DcopfError):
    pass


class RegionCountMismatch(DcopfError):
    pass
