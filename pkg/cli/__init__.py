"""Command-line experiment driver for kinetic-gmsfem."""

from .commands import main

__all__ = ["main"]
