"""Exception hierarchy shared across the package."""


class SlicePlanError(Exception):
    """Base class for all package errors."""


class ParameterError(SlicePlanError, ValueError):
    """An argument violates a precondition (bad range, shape mismatch, ...)."""


class ClosedNetworkError(SlicePlanError):
    """The routing matrix has no exit, so the traffic equations are singular."""


class UnstableNetworkError(SlicePlanError):
    """Some node has an arrival rate at or above its service rate."""


class DegenerateError(SlicePlanError):
    """Input carries no traffic at all, so there is nothing to size."""


class EmbeddingError(SlicePlanError):
    """A virtual network cannot be placed on the substrate.

    ``reason`` is one of the ``REASON_*`` constants in :mod:`sliceplan.embedding`.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


class SearchTooLargeError(SlicePlanError):
    """Exact search was asked to handle an instance beyond its size limits."""


class ScenarioError(SlicePlanError):
    """A scenario document failed to parse or validate."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InfeasibleError(SlicePlanError):
    """The latency target cannot be met (e.g. fixed nodes alone exceed it)."""
