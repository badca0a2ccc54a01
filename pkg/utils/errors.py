"""
Exception hierarchy for the Chronosurf engine.

Library code raises these; only the CLI turns them into exit codes.
"""
from typing import Optional


class EngineError(Exception):
    """Root of all engine errors."""
    pass


class DomainError(EngineError, ValueError):
    """Raised when an input violates an operation's domain or preconditions."""
    pass


class SceneFormatError(EngineError):
    """Raised when a scene file is malformed."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ManifestError(EngineError):
    """Raised when a dataset manifest cannot be loaded."""
    pass


class FitDivergenceError(EngineError):
    """Raised when a fit produces a non-finite loss."""

    def __init__(self, message: str, group: Optional[str] = None):
        super().__init__(message)
        self.group = group
