"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable ``kind`` tag; the CLI prints
failures as ``error[kind]: message`` and maps kinds to exit codes.
"""

from __future__ import annotations


class AdoptCurveError(Exception):
    kind = "internal"


class DomainError(AdoptCurveError, ValueError):
    """Input outside an operation's mathematical domain."""

    kind = "domain"


class ValidationError(AdoptCurveError, ValueError):
    """Structurally invalid data (broken invariant, mixed kinds, bad config)."""

    kind = "validation"


class UnreachableTargetError(AdoptCurveError, ValueError):
    """Requested count is at or above the curve's asymptotic ceiling."""

    kind = "unreachable-target"

    def __init__(self, target: float, ceiling: float):
        self.target = target
        self.ceiling = ceiling
        super().__init__(
            f"target {target!r} is unreachable (ceiling={ceiling!r})"
        )


class InsufficientDataError(AdoptCurveError, ValueError):
    """Too few observations (or no signal) to attempt a fit."""

    kind = "insufficient-data"


class EmptyInputError(AdoptCurveError, ValueError):
    """An analytics operation received no qualifying records."""

    kind = "empty-input"


class NotConvergedError(AdoptCurveError, ValueError):
    """A forecast was requested from a fit that did not converge."""

    kind = "not-converged"


class NotFoundError(AdoptCurveError, LookupError):
    kind = "not-found"


class TransientRegistryError(AdoptCurveError):
    """Registry failure that persisted through the retry budget."""

    kind = "transient"


class PermanentRegistryError(AdoptCurveError):
    """Registry rejected the request; retrying will not help."""

    kind = "permanent"


class StoreIOError(AdoptCurveError, OSError):
    kind = "io"


class CorruptStoreError(AdoptCurveError):
    """More than 10% of a file's lines failed to parse as the expected kind."""

    kind = "corrupt"


class CliUsageError(AdoptCurveError):
    kind = "usage"
