"""Exception hierarchy for the forkscope toolkit.

Every error raised on a contract violation derives from ForkscopeError so
callers (and the CLI) can catch tool errors without swallowing bugs.
"""

from __future__ import annotations


class ForkscopeError(Exception):
    """Base class for all forkscope errors."""


# --- history ingest ---------------------------------------------------------

class UnreadableSource(ForkscopeError):
    """The history source path cannot be read or is not a repository."""


class MalformedFixture(ForkscopeError):
    """A fixture violates its schema. Carries a JSON-pointer location."""

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{message} (at {pointer})" if pointer else message)


class CycleDetected(ForkscopeError):
    """The commit graph is not a DAG."""


class UnknownCommit(ForkscopeError):
    """A commit id is not present in the history."""


class TruncatedAncestry(ForkscopeError):
    """An operation would need commits beyond the truncation boundary."""


# --- hosting metadata -------------------------------------------------------

class NetworkFailure(ForkscopeError):
    """Request failed after all retries."""


class SchemaMismatch(ForkscopeError):
    """Metadata payload violates the expected schema or count invariants."""


class RateLimitExceeded(ForkscopeError):
    """Rate-limit responses persisted past the retry cap."""


# --- maintenance ------------------------------------------------------------

class EmptyHistory(ForkscopeError):
    """Operation requires a non-empty commit history."""


class InvalidInput(ForkscopeError):
    """Input values violate an operation precondition."""


class TooFewVectors(ForkscopeError):
    """Standardization needs at least two feature vectors."""


class KTooSmall(ForkscopeError):
    """Cluster count below 2."""


class KTooLarge(ForkscopeError):
    """Cluster count exceeds the number of points."""


class LabelLengthMismatch(ForkscopeError):
    """Cluster labels do not align with the feature matrix rows."""


# --- similarity -------------------------------------------------------------

class NoEligibleFiles(ForkscopeError):
    """A snapshot contains no source files matching the allow-list."""


class EmptyInput(ForkscopeError):
    """Operation requires a non-empty input sequence."""


# --- lineage ----------------------------------------------------------------

class TooFewScores(ForkscopeError):
    """Threshold derivation needs at least two similarity scores."""


class NoParentCommitsInWindow(ForkscopeError):
    """No parent commits fall inside the fork-time search window."""


# --- vulnscan ---------------------------------------------------------------

class DuplicateFinding(ForkscopeError):
    """More than one finding for the same (repo, signature) pair."""


# --- analytics --------------------------------------------------------------

class LengthMismatch(ForkscopeError):
    """Paired samples have different lengths."""


class ZeroVariance(ForkscopeError):
    """Correlation is undefined for a constant sample."""


class TooFewGroups(ForkscopeError):
    """Rank test needs at least two groups."""


class EmptyGroup(ForkscopeError):
    """Rank test groups must be non-empty."""


class DuplicateRegistryEntry(ForkscopeError):
    """A repo appears more than once in the survivability registry."""


# --- pipeline ---------------------------------------------------------------

class ConfigInvalid(ForkscopeError):
    """Pipeline configuration is invalid. Carries the offending field path."""

    def __init__(self, message: str, field: str = ""):
        self.field = field
        super().__init__(f"{message} (field: {field})" if field else message)


class StageDependencyMissing(ForkscopeError):
    """A stage was requested but its input artifacts are not present."""
