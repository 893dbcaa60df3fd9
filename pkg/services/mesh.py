"""Nested coarse/fine rectangular partition of the unit square.

Blocks, cells and nodes are numbered row-major from the lower-left corner.
A block's local node k sits at (ix, iy) with k = iy * (nf + 1) + ix. Nodes
on a coarse edge are duplicated per block; the geometric id
gid = gy * (nf * nc_x + 1) + gx identifies the point they share.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from config.logger import get_logger
from services.errors import InvalidArgumentError

logger = get_logger(__name__)

SIDES = ("left", "right", "bottom", "top")
OPPOSITE = {"left": "right", "right": "left", "bottom": "top", "top": "bottom"}
NORMALS = {
    "left": np.array([-1.0, 0.0]),
    "right": np.array([1.0, 0.0]),
    "bottom": np.array([0.0, -1.0]),
    "top": np.array([0.0, 1.0]),
}

# |v.n| below this is a tangential face
TANGENT_TOL = 1e-12


@dataclass(frozen=True)
class CoarseEdge:
    index: int
    orientation: str  # "v" (x = const) or "h" (y = const)
    minus: Optional[int]  # block on the left / below
    plus: Optional[int]  # block on the right / above

    @property
    def interior(self) -> bool:
        return self.minus is not None and self.plus is not None

    @property
    def blocks(self) -> tuple[int, ...]:
        return tuple(b for b in (self.minus, self.plus) if b is not None)


@dataclass(frozen=True)
class NestedMesh:
    nc_x: int
    nc_y: int
    nf: int

    # sizes

    @property
    def n_blocks(self) -> int:
        return self.nc_x * self.nc_y

    @property
    def H_x(self) -> float:
        return 1.0 / self.nc_x

    @property
    def H_y(self) -> float:
        return 1.0 / self.nc_y

    @property
    def H(self) -> float:
        """Coarse mesh size used as the jump penalty scale."""
        return max(self.H_x, self.H_y)

    @property
    def h_x(self) -> float:
        return self.H_x / self.nf

    @property
    def h_y(self) -> float:
        return self.H_y / self.nf

    @property
    def n_side(self) -> int:
        return self.nf + 1

    @property
    def nodes_per_block(self) -> int:
        return (self.nf + 1) ** 2

    @property
    def cells_per_block(self) -> int:
        return self.nf * self.nf

    @property
    def n_fine_cells(self) -> int:
        return self.n_blocks * self.cells_per_block

    # block topology

    def check_block(self, j: int) -> None:
        if not 0 <= j < self.n_blocks:
            raise InvalidArgumentError(f"block id {j} outside 0..{self.n_blocks - 1}")

    def block_coords(self, j: int) -> tuple[int, int]:
        self.check_block(j)
        return j % self.nc_x, j // self.nc_x

    def block_id(self, bx: int, by: int) -> int:
        return by * self.nc_x + bx

    def block_origin(self, j: int) -> tuple[float, float]:
        bx, by = self.block_coords(j)
        return bx * self.H_x, by * self.H_y

    def neighbor(self, j: int, side: str) -> Optional[int]:
        """Adjacent block across `side`, or None on the domain boundary."""
        bx, by = self.block_coords(j)
        dx, dy = {"left": (-1, 0), "right": (1, 0), "bottom": (0, -1), "top": (0, 1)}[side]
        nx, ny = bx + dx, by + dy
        if 0 <= nx < self.nc_x and 0 <= ny < self.nc_y:
            return self.block_id(nx, ny)
        return None

    # fine nodes

    @cached_property
    def local_coords(self) -> np.ndarray:
        """(nn, 2) node offsets from a block's lower-left corner."""
        ix, iy = np.meshgrid(np.arange(self.n_side), np.arange(self.n_side))
        return np.column_stack([ix.ravel() * self.h_x, iy.ravel() * self.h_y])

    def node_coords(self, j: int) -> np.ndarray:
        ox, oy = self.block_origin(j)
        return self.local_coords + np.array([ox, oy])

    @cached_property
    def face_local_nodes(self) -> dict[str, np.ndarray]:
        """Local node indices along each side, ordered by increasing coordinate."""
        n = self.n_side
        t = np.arange(n)
        return {
            "left": t * n,
            "right": t * n + self.nf,
            "bottom": t,
            "top": self.nf * n + t,
        }

    def global_node_ids(self, j: int) -> np.ndarray:
        """Geometric ids of all nodes of block j, in local order."""
        bx, by = self.block_coords(j)
        nfx = self.nf * self.nc_x + 1
        ix, iy = np.meshgrid(np.arange(self.n_side), np.arange(self.n_side))
        return ((by * self.nf + iy.ravel()) * nfx + bx * self.nf + ix.ravel()).astype(np.int64)

    def face_node_ids(self, j: int, side: str) -> np.ndarray:
        return self.global_node_ids(j)[self.face_local_nodes[side]]

    def gid_coords(self, gids: np.ndarray) -> np.ndarray:
        nfx = self.nf * self.nc_x + 1
        gids = np.asarray(gids)
        return np.column_stack([(gids % nfx) * self.h_x, (gids // nfx) * self.h_y])

    # fine cells

    @cached_property
    def cell_local_nodes(self) -> np.ndarray:
        """(nc, 4) local nodes of each cell: (0,0), (1,0), (0,1), (1,1) corners."""
        n = self.n_side
        cx, cy = np.meshgrid(np.arange(self.nf), np.arange(self.nf))
        k0 = (cy * n + cx).ravel()
        return np.column_stack([k0, k0 + 1, k0 + n, k0 + n + 1])

    def cell_centers(self, j: int) -> np.ndarray:
        """(nc, 2) centers of block j's cells, row-major."""
        ox, oy = self.block_origin(j)
        cx, cy = np.meshgrid(np.arange(self.nf), np.arange(self.nf))
        return np.column_stack(
            [ox + (cx.ravel() + 0.5) * self.h_x, oy + (cy.ravel() + 0.5) * self.h_y]
        )

    # coarse edges

    @cached_property
    def edges(self) -> tuple[CoarseEdge, ...]:
        """Vertical edges row by row, then horizontal edges row by row."""
        out: list[CoarseEdge] = []
        for by in range(self.nc_y):
            for ix in range(self.nc_x + 1):
                minus = self.block_id(ix - 1, by) if ix > 0 else None
                plus = self.block_id(ix, by) if ix < self.nc_x else None
                out.append(CoarseEdge(len(out), "v", minus, plus))
        for iy in range(self.nc_y + 1):
            for bx in range(self.nc_x):
                minus = self.block_id(bx, iy - 1) if iy > 0 else None
                plus = self.block_id(bx, iy) if iy < self.nc_y else None
                out.append(CoarseEdge(len(out), "h", minus, plus))
        return tuple(out)

    @property
    def interior_edges(self) -> tuple[CoarseEdge, ...]:
        return tuple(e for e in self.edges if e.interior)

    def edge_between(self, a: int, b: int) -> Optional[CoarseEdge]:
        for e in self.edges:
            if e.interior and {e.minus, e.plus} == {a, b}:
                return e
        return None


def build_nested_mesh(nc_x: int, nc_y: int, nf: int) -> NestedMesh:
    """Build the nested mesh with nc_x by nc_y blocks of nf by nf fine cells."""
    for name, value in (("nc_x", nc_x), ("nc_y", nc_y), ("nf", nf)):
        if int(value) != value or value < 1:
            raise InvalidArgumentError(f"{name} must be a positive integer, got {value}")
    mesh = NestedMesh(int(nc_x), int(nc_y), int(nf))
    logger.debug(
        f"Built mesh {nc_x}x{nc_y} blocks, {nf}x{nf} cells per block, "
        f"{len(mesh.interior_edges)} interior coarse edges"
    )
    return mesh


@dataclass(frozen=True)
class OversampleRegion:
    center: int
    blocks: tuple[int, ...]
    interior_edges: tuple[int, ...] = field(default=())

    def __contains__(self, j: object) -> bool:
        return j in self.blocks

    def position(self, j: int) -> int:
        return self.blocks.index(j)


def oversample(mesh: NestedMesh, j: int, layers: int) -> OversampleRegion:
    """Blocks within Chebyshev distance `layers` of block j, clipped to the domain."""
    if layers < 0:
        raise InvalidArgumentError(f"layers must be >= 0, got {layers}")
    bx, by = mesh.block_coords(j)
    blocks = tuple(
        mesh.block_id(x, y)
        for y in range(max(0, by - layers), min(mesh.nc_y, by + layers + 1))
        for x in range(max(0, bx - layers), min(mesh.nc_x, bx + layers + 1))
    )
    members = set(blocks)
    interior = tuple(
        e.index for e in mesh.interior_edges if e.minus in members and e.plus in members
    )
    return OversampleRegion(j, blocks, interior)


def _as_blocks(region: OversampleRegion | Iterable[int]) -> tuple[int, ...]:
    if isinstance(region, OversampleRegion):
        return region.blocks
    return tuple(region)


def region_boundary_faces(
    mesh: NestedMesh, region: OversampleRegion | Iterable[int]
) -> list[tuple[int, str]]:
    """(block, side) pairs lying on the outer boundary of the region."""
    blocks = _as_blocks(region)
    members = set(blocks)
    return [
        (b, side)
        for b in blocks
        for side in SIDES
        if mesh.neighbor(b, side) not in members
    ]


def inflow_faces(
    mesh: NestedMesh, region: OversampleRegion | Iterable[int], v: Sequence[float]
) -> list[tuple[int, str, float]]:
    """Boundary faces of the region with v.n < 0, as (block, side, v.n)."""
    v = np.asarray(v, dtype=float)
    out = []
    for b, side in region_boundary_faces(mesh, region):
        s = float(v @ NORMALS[side])
        if s < -TANGENT_TOL:
            out.append((b, side, s))
    return out


def upwind_nodes(
    mesh: NestedMesh, region: OversampleRegion | Iterable[int], v: Sequence[float]
) -> np.ndarray:
    """Sorted geometric ids of fine nodes on the inflow part of the region boundary."""
    faces = inflow_faces(mesh, region, v)
    if not faces:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate([mesh.face_node_ids(b, side) for b, side, _ in faces]))


def overlap_constant(mesh: NestedMesh, layers: int) -> int:
    """Largest number of oversampled regions sharing one block or one interior edge."""
    block_count = np.zeros(mesh.n_blocks, dtype=int)
    edge_count = np.zeros(len(mesh.edges), dtype=int)
    for j in range(mesh.n_blocks):
        region = oversample(mesh, j, layers)
        block_count[list(region.blocks)] += 1
        if region.interior_edges:
            edge_count[list(region.interior_edges)] += 1
    return int(max(block_count.max(), edge_count.max()))
