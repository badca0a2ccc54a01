"""
Command line interface.
"""
from cli.commands import cli

__all__ = ["cli"]
