"""Exception taxonomy shared by all databalance modules."""


class DataBalanceError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DataBalanceError):
    """A vector's length disagrees with the problem dimensions m/c."""


class NonBinaryEntry(DataBalanceError):
    """An attribute or label entry is not exactly 0 or 1."""


class NonPositiveUtility(DataBalanceError):
    """A record carries a utility u <= 0."""


class EmptyStream(DataBalanceError):
    """An operation that needs at least one example received none."""


class InstanceTooLarge(DataBalanceError):
    """The exact solver was asked for more examples than it supports."""


class NonConvergence(DataBalanceError):
    """The exact solver hit its iteration cap above the residual tolerance."""


class VersionMismatch(DataBalanceError):
    """A checkpoint's format/layout version or dimensions do not match."""


class CorruptCheckpoint(DataBalanceError):
    """A checkpoint failed to parse or is missing required fields."""


class InfeasibleCorrelation(DataBalanceError):
    """A requested pairwise correlation exceeds its Frechet bound."""


class InfiniteStreamTopQ(DataBalanceError):
    """Top-q subsampling requires a finite stream."""


class DegenerateGroup(DataBalanceError):
    """A conditional bias measure has an empty group on one side."""


class MalformedLine(DataBalanceError):
    """A record line failed to parse or validate (strict ingestion only)."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class UnreadableSource(DataBalanceError):
    """The ingestion source cannot be opened or read."""
