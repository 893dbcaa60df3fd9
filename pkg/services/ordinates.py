"""Discrete ordinates on the unit circle and the isotropic scattering matrix."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from services.errors import InvalidArgumentError


def _trigonometric(m: int) -> np.ndarray:
    return 2.0 * np.pi * (np.arange(1, m + 1) - 0.5) / m


def _quarter_offset(m: int) -> np.ndarray:
    return 2.0 * np.pi * (np.arange(1, m + 1) - 0.25) / m


LAYOUTS: dict[str, Callable[[int], np.ndarray]] = {
    "trigonometric": _trigonometric,
    "quarter_offset": _quarter_offset,
}


@dataclass(frozen=True, eq=False)
class OrdinateSet:
    angles: np.ndarray
    directions: np.ndarray  # (m, 2) unit vectors
    weights: np.ndarray  # (m,), sum to one
    layout: str = "trigonometric"

    @property
    def m(self) -> int:
        return len(self.weights)

    def average(self, values: np.ndarray) -> np.ndarray:
        """Angular average sum_i alpha_i u_i over the leading (ordinate) axis."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Quadrature of a function of the angle, normalized by 2*pi."""
        return float(self.weights @ f(self.angles))


def build_ordinates(m: int, layout: str = "trigonometric") -> OrdinateSet:
    """Equal-weight directions on S^1.

    Weights are normalized in extended precision so they sum to one in float64.
    """
    if int(m) != m or m < 2:
        raise InvalidArgumentError(f"ordinate count m must be >= 2, got {m}")
    if layout not in LAYOUTS:
        raise InvalidArgumentError(f"unknown ordinate layout {layout!r}; known: {sorted(LAYOUTS)}")
    m = int(m)
    theta = LAYOUTS[layout](m)
    w = np.full(m, 1.0, dtype=np.longdouble)
    w /= w.sum()
    directions = np.column_stack([np.cos(theta), np.sin(theta)])
    return OrdinateSet(theta, directions, w.astype(np.float64), layout)


def scattering_matrix(ords: OrdinateSet) -> np.ndarray:
    """a_ij = alpha_i - alpha_i^2 on the diagonal, -alpha_i alpha_j off it."""
    a = ords.weights
    return np.diag(a) - np.outer(a, a)
