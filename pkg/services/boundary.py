"""Inflow data g(x, v) by name."""

from typing import Callable

import numpy as np

from services.errors import InvalidArgumentError

InflowData = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _cosine(points: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.cos(2.0 * np.pi * (points[..., 0] + points[..., 1])) + 1.0


def _constant(points: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.ones(points.shape[:-1])


def _zero(points: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.zeros(points.shape[:-1])


BOUNDARY_DATA: dict[str, InflowData] = {
    "cosine": _cosine,
    "constant": _constant,
    "zero": _zero,
}


def boundary_data(name: str) -> InflowData:
    """Vectorized g(points, v); points has shape (..., 2), v is one direction."""
    try:
        return BOUNDARY_DATA[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown boundary data {name!r}; known: {sorted(BOUNDARY_DATA)}"
        ) from None
