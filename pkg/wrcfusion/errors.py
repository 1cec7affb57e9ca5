"""
Error Types
Exception hierarchy shared by every wrcfusion module.
"""

from typing import Optional


class WRCFusionError(Exception):
    """Base class for all errors raised by wrcfusion."""


class DimensionError(WRCFusionError, ValueError):
    """Tensor shapes or axes do not agree."""


class ConfigurationError(WRCFusionError, ValueError):
    """A configuration value is invalid or inconsistent."""


class ContractError(WRCFusionError):
    """An operation was called outside its precondition."""


class NumericError(WRCFusionError, ArithmeticError):
    """Non-finite values reached an operation that requires finite input."""


class InternalError(WRCFusionError, RuntimeError):
    """Broken internal invariant (for example a cycle in the autodiff graph)."""


class SceneError(WRCFusionError):
    """A synthetic scene cannot be rendered into the configured cube."""


class FormatError(WRCFusionError, ValueError):
    """A binary or text file does not follow its declared format."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class CheckpointMismatchError(WRCFusionError):
    """A checkpoint does not fit the model it is loaded into."""
