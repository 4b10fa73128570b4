"""Exception types shared across the package."""

from __future__ import annotations


class LsdqnError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(LsdqnError):
    """Array shapes do not line up with the operation's contract."""


class NotPositiveDefinite(LsdqnError):
    """A symmetric factorization hit a non-positive pivot, or a linear
    system was singular. This is the failure signature of unregularized
    least-squares solves on ill-conditioned feature matrices."""


class EmptyBuffer(LsdqnError):
    """An operation required a non-empty replay buffer or snapshot."""


class InvalidAction(LsdqnError):
    """Action index outside [0, n_actions)."""


class InvalidGeometry(LsdqnError):
    """Environment construction parameters are inconsistent."""


class TooFewPairs(LsdqnError):
    """Fewer than five nonzero paired differences for the signed-rank test."""


class MisalignedCurves(LsdqnError):
    """Learning curves do not share the same evaluation steps."""


class ConfigError(LsdqnError):
    """Configuration file is missing, malformed, or has unknown keys."""
