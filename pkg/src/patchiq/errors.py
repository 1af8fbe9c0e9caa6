"""Error types shared across the package.

Everything that signals a violated input contract derives from
``ValidationError`` so callers can catch malformed input in one clause
while still distinguishing the individual conditions.
"""

from __future__ import annotations


class PatchiqError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PatchiqError, ValueError):
    """An input violated a documented precondition."""


class DimensionTooSmall(ValidationError):
    """Image or patch smaller than the operation requires."""


class GridMismatch(ValidationError):
    """A patch grid was applied to an image with different dimensions."""


class LowScaleTooSmall(ValidationError):
    """Downscaled image too small to tile, and strict mode is on."""


class ShapeError(ValidationError):
    """Array shape inconsistent with the declared contract."""


class DimMismatch(ValidationError):
    """Feature dimensionality differs between values that must agree."""


class EmptySequence(ValidationError):
    """A feature sequence with zero vectors where at least one is required."""


class EmptyTrainingSet(ValidationError):
    """No training entries available for fitting."""


class UnsupportedMode(PatchiqError):
    """Operation not available for this backend kind."""


class TraceRequired(PatchiqError):
    """Backward pass invoked without a forward trace."""


class DegenerateInput(PatchiqError):
    """Statistic undefined for this input (e.g. zero variance)."""


class FormatError(PatchiqError):
    """Malformed binary container. Carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ItemizedIOError(PatchiqError):
    """I/O failure for a specific set of items; ids are listed."""

    def __init__(self, message: str, ids: list[str]):
        super().__init__(f"{message}: {', '.join(ids)}")
        self.ids = list(ids)
