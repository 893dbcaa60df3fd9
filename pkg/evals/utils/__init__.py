"""Utility functions for kinetic-gmsfem evaluations."""

from .validation import (
    constant_field,
    min_eigenvalue_ratio,
    random_field,
    read_csv,
    relative_difference,
)

__all__ = [
    "constant_field",
    "min_eigenvalue_ratio",
    "random_field",
    "read_csv",
    "relative_difference",
]
