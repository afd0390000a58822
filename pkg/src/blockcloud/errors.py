"""Exception hierarchy shared by every module."""

from __future__ import annotations


class BlockCloudError(Exception):
    """Base class for all library errors."""


class ValidationError(BlockCloudError, ValueError):
    """A value violates a domain-type invariant."""


class NegativeBalanceError(BlockCloudError):
    """An update would drive a balance or supply below zero."""


class NoCandidateError(BlockCloudError):
    """Matchmaking was asked to choose from an empty candidate set."""


class InsufficientNodesError(BlockCloudError):
    """Fewer candidate nodes than the requested set size."""


class DegenerateSplitError(BlockCloudError):
    """A non-empty reward pool has only zero contribution weights."""


class NoViableProtocolError(BlockCloudError):
    """No BFT protocol passed the KCI filter with a positive score."""


class NumericalDegeneracyError(BlockCloudError, ArithmeticError):
    """A recursion produced a non-positive variance or diagonal entry."""


class ChainClosedError(BlockCloudError):
    """Mutation attempted on a side chain that is closed permanently."""


class StateTransitionError(BlockCloudError):
    """An assignment update moves backward or skips a lifecycle state."""


class ComplianceError(BlockCloudError):
    """A task spec does not comply with the block data structure."""


class OpenAssignmentsError(BlockCloudError):
    """A task close was requested while assignments are still open."""


class ExchangeError(BlockCloudError):
    """Cross-chain exchange aborted (expiry, verification failure, cancel)."""


class BlacklistedError(ExchangeError):
    """The counterpart chain or token pair is barred from exchange."""


class IntegrityError(BlockCloudError):
    """Stored state is inconsistent with what an operation requires."""


class ConfigError(BlockCloudError):
    """Scenario configuration failed validation.

    ``errors`` lists one ``(field_path, message)`` pair per problem.
    """

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        lines = "; ".join(f"{path}: {msg}" for path, msg in self.errors)
        super().__init__(f"invalid config: {lines}")
