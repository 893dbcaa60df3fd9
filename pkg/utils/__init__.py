"""Utility functions for kinetic-gmsfem."""

from .helpers import format_cell, format_float, get_content_hash, run_blockwise, write_csv

__all__ = ["format_cell", "format_float", "get_content_hash", "run_blockwise", "write_csv"]
