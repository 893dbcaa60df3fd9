"""
Utility functions for evaluations
"""

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from services.dg_fine import DGAssembler, KineticField


def random_field(assembler: DGAssembler, rng: np.random.Generator, blocks: Sequence[int] | None = None) -> KineticField:
    """Standard-normal nodal values on the given blocks (default: whole mesh)."""
    blocks = assembler.blocks(blocks)
    return KineticField(tuple(blocks), rng.standard_normal((assembler.m, len(blocks), assembler.nn)))


def constant_field(assembler: DGAssembler, value: float = 1.0) -> KineticField:
    blocks = assembler.blocks()
    return KineticField(blocks, np.full((assembler.m, len(blocks), assembler.nn), value))


def relative_difference(a: float | np.ndarray, b: float | np.ndarray) -> float:
    """|a - b| / max(|b|, tiny), elementwise max for arrays."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(float(np.abs(b).max()), np.finfo(float).tiny)
    return float(np.abs(a - b).max() / scale)


def min_eigenvalue_ratio(matrix: np.ndarray) -> float:
    """Smallest over largest absolute eigenvalue of a symmetric matrix."""
    w = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    top = np.abs(w).max()
    return float(w[0] / top) if top > 0 else 0.0


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]
