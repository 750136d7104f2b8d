"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented codes (1 invariant failure, 2 usage, 3 resource cap).
"""

from __future__ import annotations


class SkewRatError(Exception):
    exit_code = 1


class InvariantViolation(SkewRatError):
    """An internal consistency assertion failed."""

    exit_code = 1


class ResourceCap(SkewRatError):
    exit_code = 3


class PrecisionExhausted(SkewRatError):
    """Working precision (or available digits) ran out before the request was met.

    ``digits`` holds whatever was certified before the failure.
    """

    exit_code = 3

    def __init__(self, message: str, digits: list[int] | None = None):
        super().__init__(message)
        self.digits = list(digits or [])


class InsufficientDigits(SkewRatError):
    exit_code = 2


class BoundaryAmbiguity(SkewRatError):
    exit_code = 1


class BlockTooLarge(ResourceCap):
    pass


class StateBlowup(ResourceCap):
    pass


class ParityViolation(InvariantViolation):
    pass


class MassMismatch(InvariantViolation):
    pass


class HalfIntegerWeight(InvariantViolation):
    pass


class GridTooCoarse(SkewRatError):
    exit_code = 2


class CenteringViolation(InvariantViolation):
    pass


class GroupingAssertionFailed(InvariantViolation):
    def __init__(self, message: str, index: int | None = None, prop: str | None = None):
        super().__init__(message)
        self.index = index
        self.prop = prop


class NotAperiodic(SkewRatError):
    exit_code = 1


class EigenGapTooSmall(SkewRatError):
    exit_code = 1
