"""Heterogeneous coefficient a(x) for the oscillatory and high-contrast examples."""

from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np

from config.logger import get_logger
from services.errors import InvalidArgumentError
from services.mesh import NestedMesh

logger = get_logger(__name__)

# (x0, x1, y0, y1): half-open fine-cell index ranges
Rect = tuple[int, int, int, int]


@dataclass(frozen=True)
class MediaSpec:
    variant: Literal["oscillatory", "contrast"]
    rectangles: tuple[Rect, ...] = field(default=())
    grid: tuple[int, int] = (1, 1)
    background: float = 1.0
    contrast: float = 1.0
    power: float = 1.0

    def with_power(self, power: float) -> "MediaSpec":
        """Same inclusion geometry raised to another exponent."""
        return replace(self, power=float(power))

    def to_payload(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "rectangles": [list(r) for r in self.rectangles],
            "grid": list(self.grid),
            "background": self.background,
            "contrast": self.contrast,
            "power": self.power,
        }

    def coverage(self) -> float:
        return float(inclusion_mask(self).mean()) if self.variant == "contrast" else 0.0


def oscillatory_media() -> MediaSpec:
    return MediaSpec("oscillatory")


def _oscillatory(x: np.ndarray) -> np.ndarray:
    s1 = np.sin(10.0 * np.pi * x[..., 0])
    c2 = np.cos(10.0 * np.pi * x[..., 1])
    s2 = np.sin(10.0 * np.pi * x[..., 1])
    return (2.0 + 1.8 * s1) / (2.0 + 1.8 * c2) + (2.0 + s2) / (2.0 + 1.8 * s1)


def inclusion_mask(spec: MediaSpec) -> np.ndarray:
    """(ny, nx) boolean mask of inclusion cells."""
    nx, ny = spec.grid
    mask = np.zeros((ny, nx), dtype=bool)
    for x0, x1, y0, y1 in spec.rectangles:
        mask[y0:y1, x0:x1] = True
    return mask


def eval_media(spec: MediaSpec, x: np.ndarray) -> np.ndarray:
    """Evaluate a(x) at points of shape (..., 2) in the closed unit square."""
    x = np.asarray(x, dtype=float)
    if spec.variant == "oscillatory":
        return _oscillatory(x)
    if spec.variant != "contrast":
        raise InvalidArgumentError(f"unknown media variant {spec.variant!r}")
    nx, ny = spec.grid
    ix = np.clip(np.floor(x[..., 0] * nx).astype(int), 0, nx - 1)
    iy = np.clip(np.floor(x[..., 1] * ny).astype(int), 0, ny - 1)
    kappa = np.where(inclusion_mask(spec)[iy, ix], spec.contrast, spec.background)
    return kappa**spec.power


def cell_values(spec: MediaSpec, mesh: NestedMesh) -> np.ndarray:
    """(n_blocks, nf * nf) media values at fine-cell centers."""
    return np.stack([eval_media(spec, mesh.cell_centers(j)) for j in range(mesh.n_blocks)])


def _overlaps(rect: Rect, placed: list[Rect], halo: int) -> bool:
    x0, x1, y0, y1 = rect
    for a0, a1, b0, b1 in placed:
        if x0 < a1 + halo and a0 < x1 + halo and y0 < b1 + halo and b0 < y1 + halo:
            return True
    return False


def default_contrast_field(
    mesh: NestedMesh,
    contrast: float,
    seed: int,
    power: float = 1.0,
    coverage: float = 0.15,
    max_attempts: int = 5000,
) -> MediaSpec:
    """Seeded surrogate of a channelized high-contrast medium on the fine grid.

    One horizontal channel crossing most of the domain, then non-overlapping
    boxes (one-cell halo) until the inclusion coverage reaches `coverage`.
    """
    if contrast < 1:
        raise InvalidArgumentError(f"contrast must be >= 1, got {contrast}")
    rng = np.random.default_rng(seed)
    nx, ny = mesh.nc_x * mesh.nf, mesh.nc_y * mesh.nf
    total = nx * ny

    thickness = max(1, ny // 50)
    lo, hi = ny // 4, max(ny // 4 + 1, 3 * ny // 4 - thickness + 1)
    row = int(rng.integers(lo, hi))
    margin = nx // 10
    placed: list[Rect] = [(margin, nx - margin, row, min(ny, row + thickness))]
    covered = (placed[0][1] - placed[0][0]) * (placed[0][3] - placed[0][2])

    smin = max(1, min(nx, ny) // 25)
    smax = max(smin, min(nx, ny) // 12)
    attempts = 0
    while covered < coverage * total and attempts < max_attempts:
        attempts += 1
        w, h = (int(s) for s in rng.integers(smin, smax + 1, size=2))
        if w > nx or h > ny:
            continue
        x0 = int(rng.integers(0, nx - w + 1))
        y0 = int(rng.integers(0, ny - h + 1))
        rect = (x0, x0 + w, y0, y0 + h)
        if _overlaps(rect, placed, halo=1):
            continue
        placed.append(rect)
        covered += w * h

    spec = MediaSpec(
        "contrast",
        rectangles=tuple(placed),
        grid=(nx, ny),
        background=1.0,
        contrast=float(contrast),
        power=float(power),
    )
    logger.debug(f"Contrast field: {len(placed)} inclusions, coverage {covered / total:.3f}")
    if covered < coverage * total:
        logger.warning(f"Contrast field coverage {covered / total:.3f} below target {coverage}")
    return spec
