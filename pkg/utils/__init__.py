"""
Shared utilities: exceptions and logging setup.
"""
from utils.errors import (
    EngineError,
    DomainError,
    SceneFormatError,
    ManifestError,
    FitDivergenceError,
)
from utils.logger import setup_logging

__all__ = [
    "EngineError",
    "DomainError",
    "SceneFormatError",
    "ManifestError",
    "FitDivergenceError",
    "setup_logging",
]
