"""Upwind DG discretization of the discrete-ordinates system.

Every matrix here acts on a region: an ordered list of coarse blocks. Degrees
of freedom are laid out ordinate-major, then block (region order), then local
node, i.e. index = i * (R * nn) + r * nn + k. Within a block each component is
continuous Q1; blocks couple only through the upwind flux on coarse edges.
Matrix entry [p, q] is the form evaluated at (trial phi_q, test phi_p).
"""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from config.logger import get_logger
from services.boundary import InflowData, boundary_data
from services.errors import InvalidArgumentError, NumericalFailureError
from services.media import MediaSpec, cell_values
from services.mesh import (
    NORMALS,
    OPPOSITE,
    SIDES,
    TANGENT_TOL,
    NestedMesh,
    OversampleRegion,
    inflow_faces,
    upwind_nodes,
)
from services.ordinates import OrdinateSet, scattering_matrix
from utils.helpers import write_csv

logger = get_logger(__name__)

# dense coarse solves up to this many unknowns
DENSE_LIMIT = 2000

_GAUSS_XI = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS_W = np.array([0.5, 0.5])

Region = OversampleRegion | Sequence[int] | None


# ==============================================================================
# Kinetic fields
# ==============================================================================


@dataclass(frozen=True, eq=False)
class KineticField:
    """m-component block-continuous Q1 field over a region."""

    blocks: tuple[int, ...]
    values: np.ndarray  # (m, R, nn)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def nn(self) -> int:
        return self.values.shape[2]

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    @classmethod
    def from_flat(cls, blocks: Sequence[int], m: int, vec: np.ndarray) -> "KineticField":
        vec = np.asarray(vec, dtype=float)
        return cls(tuple(blocks), vec.reshape(m, len(blocks), -1))

    @classmethod
    def zeros(cls, blocks: Sequence[int], m: int, nn: int) -> "KineticField":
        return cls(tuple(blocks), np.zeros((m, len(blocks), nn)))

    def check_layout(self, other: "KineticField") -> None:
        if self.blocks != other.blocks or self.values.shape != other.values.shape:
            raise InvalidArgumentError(
                f"kinetic field layouts differ: {self.values.shape} on {len(self.blocks)} blocks "
                f"vs {other.values.shape} on {len(other.blocks)} blocks"
            )

    def restrict(self, subset: Iterable[int]) -> "KineticField":
        subset = tuple(subset)
        pos = [self.blocks.index(b) for b in subset]
        return KineticField(subset, self.values[:, pos, :].copy())

    def average(self, weights: np.ndarray) -> np.ndarray:
        """Angular average sum_i alpha_i u_i, shape (R, nn)."""
        return np.tensordot(weights, self.values, axes=(0, 0))

    def __add__(self, other: "KineticField") -> "KineticField":
        self.check_layout(other)
        return KineticField(self.blocks, self.values + other.values)

    def __sub__(self, other: "KineticField") -> "KineticField":
        self.check_layout(other)
        return KineticField(self.blocks, self.values - other.values)

    def __mul__(self, c: float) -> "KineticField":
        return KineticField(self.blocks, c * self.values)

    __rmul__ = __mul__


# ==============================================================================
# 1D building blocks
# ==============================================================================


def _assemble_1d(element: np.ndarray, n_el: int) -> np.ndarray:
    out = np.zeros((n_el + 1, n_el + 1))
    for e in range(n_el):
        out[e : e + 2, e : e + 2] += element
    return out


def mass_1d(h: float, n_el: int) -> np.ndarray:
    return _assemble_1d(h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]]), n_el)


def stiffness_1d(h: float, n_el: int) -> np.ndarray:
    return _assemble_1d(np.array([[1.0, -1.0], [-1.0, 1.0]]) / h, n_el)


def convection_1d(n_el: int) -> np.ndarray:
    """c[a, b] = integral of phi_a * phi_b'."""
    return _assemble_1d(np.array([[-0.5, 0.5], [-0.5, 0.5]]), n_el)


# ==============================================================================
# Assembler
# ==============================================================================


class DGAssembler:
    """Region-level matrices of the fine upwind DG scheme.

    Media and epsilon are only needed for the collision terms; a transport-only
    assembler is enough for the jump forms and the inflow functional.
    """

    def __init__(
        self,
        mesh: NestedMesh,
        ords: OrdinateSet,
        media: Optional[MediaSpec] = None,
        epsilon: Optional[float] = None,
    ):
        if epsilon is not None and not epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
        self.mesh = mesh
        self.ords = ords
        self.media = media
        self.epsilon = epsilon
        self.cell_media = cell_values(media, mesh) if media is not None else None
        nf = mesh.nf
        self.nn = mesh.nodes_per_block
        self.m = ords.m

        m1x, m1y = mass_1d(mesh.h_x, nf), mass_1d(mesh.h_y, nf)
        k1x, k1y = stiffness_1d(mesh.h_x, nf), stiffness_1d(mesh.h_y, nf)
        c1 = convection_1d(nf)
        self.mass = sp.csr_matrix(np.kron(m1y, m1x))
        self.stiffness = sp.csr_matrix(np.kron(m1y, k1x) + np.kron(k1y, m1x))
        cx = np.kron(m1y, c1)
        cy = np.kron(c1, m1x)

        self.face_mass_1d = {"left": m1y, "right": m1y, "bottom": m1x, "top": m1x}
        self.face_length = {"left": mesh.h_y, "right": mesh.h_y, "bottom": mesh.h_x, "top": mesh.h_x}
        faces = mesh.face_local_nodes
        self.face = {}
        self.cross = {}
        for side in SIDES:
            m1 = self.face_mass_1d[side]
            own = faces[side]
            opp = faces[OPPOSITE[side]]
            rows, cols = np.meshgrid(own, own, indexing="ij")
            self.face[side] = sp.csr_matrix((m1.ravel(), (rows.ravel(), cols.ravel())), shape=(self.nn, self.nn))
            rows, cols = np.meshgrid(own, opp, indexing="ij")
            # own-side test functions against the neighbour's facing trace
            self.cross[side] = sp.csr_matrix((m1.ravel(), (rows.ravel(), cols.ravel())), shape=(self.nn, self.nn))

        # slope[i, side] = v_i . n_side, zeroed on tangential faces
        slope = np.array([[v @ NORMALS[side] for side in SIDES] for v in ords.directions])
        slope[np.abs(slope) < TANGENT_TOL] = 0.0
        self.slope = slope

        self.block_transport = []
        for i, (vx, vy) in enumerate(ords.directions):
            d = -(vx * cx.T + vy * cy.T)
            for q, side in enumerate(SIDES):
                if slope[i, q] > 0:
                    d = d + slope[i, q] * self.face[side].toarray()
            self.block_transport.append(sp.csr_matrix(d))

    # ------------------------------------------------------------------ helpers

    def blocks(self, region: Region = None) -> tuple[int, ...]:
        if region is None:
            return tuple(range(self.mesh.n_blocks))
        if isinstance(region, OversampleRegion):
            return region.blocks
        return tuple(region)

    def n_dofs(self, region: Region = None) -> int:
        return self.m * len(self.blocks(region)) * self.nn

    def dof_indices(self, region: Region, subset: Sequence[int]) -> np.ndarray:
        """Region dofs of the blocks in `subset`, in field layout order."""
        blocks = self.blocks(region)
        R = len(blocks)
        pos = np.array([blocks.index(b) for b in subset])
        k = np.arange(self.nn)
        idx = (
            np.arange(self.m)[:, None, None] * (R * self.nn)
            + pos[None, :, None] * self.nn
            + k[None, None, :]
        )
        return idx.reshape(-1)

    def adjacency(self, region: Region, side: str) -> sp.csr_matrix:
        """adj[r, r'] = 1 when block r' is block r's neighbour across `side`."""
        blocks = self.blocks(region)
        pos = {b: r for r, b in enumerate(blocks)}
        rows, cols = [], []
        for r, b in enumerate(blocks):
            nb = self.mesh.neighbor(b, side)
            if nb in pos:
                rows.append(r)
                cols.append(pos[nb])
        R = len(blocks)
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(R, R))

    def _require_collision(self) -> None:
        if self.media is None or self.epsilon is None:
            raise InvalidArgumentError("collision terms need media and epsilon")

    @cached_property
    def _cell_mass(self) -> np.ndarray:
        e = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        return np.kron(e * self.mesh.h_y, e * self.mesh.h_x)

    def weighted_mass(self, j: int) -> sp.csr_matrix:
        """Q1 mass of block j weighted by 1 / (epsilon a) per fine cell."""
        coef = 1.0 / (self.epsilon * self.cell_media[j])
        nodes = self.mesh.cell_local_nodes
        rows = np.repeat(nodes, 4, axis=1).ravel()
        cols = np.tile(nodes, (1, 4)).ravel()
        data = (coef[:, None] * self._cell_mass.ravel()[None, :]).ravel()
        return sp.csr_matrix((data, (rows, cols)), shape=(self.nn, self.nn))

    def _blockdiag(self, mats: list[sp.spmatrix]) -> sp.csr_matrix:
        return sp.block_diag(mats, format="csr")

    # ------------------------------------------------------------------ forms

    def transport_ordinate(self, region: Region, i: int) -> sp.csr_matrix:
        """Unweighted a_i on the region; inflow from outside the region is data."""
        blocks = self.blocks(region)
        R = len(blocks)
        t = sp.kron(sp.identity(R), self.block_transport[i], format="csr")
        for q, side in enumerate(SIDES):
            s = self.slope[i, q]
            if s < 0:
                t = t + s * sp.kron(self.adjacency(blocks, side), self.cross[side], format="csr")
        return t

    def transport(self, region: Region = None) -> sp.csr_matrix:
        """Matrix of a(u, w) = sum_i alpha_i a_i(u_i, w_i)."""
        blocks = self.blocks(region)
        return self._blockdiag(
            [self.ords.weights[i] * self.transport_ordinate(blocks, i) for i in range(self.m)]
        )

    def collision(self, region: Region = None, absorption: bool = True) -> sp.csr_matrix:
        """Matrix of l(u, w): scattering through (a_ij) plus epsilon-weighted mass."""
        self._require_collision()
        blocks = self.blocks(region)
        msig = self._blockdiag([self.weighted_mass(b) for b in blocks])
        out = sp.kron(scattering_matrix(self.ords), msig, format="csr")
        if absorption:
            out = out + self.epsilon * self.ordinate_mass(blocks)
        return out

    def operator(self, region: Region = None) -> sp.csr_matrix:
        return (self.transport(region) + self.collision(region)).tocsr()

    def ordinate_mass(self, region: Region = None) -> sp.csr_matrix:
        """Weighted L2 mass sum_i alpha_i int u_i w_i."""
        R = len(self.blocks(region))
        return sp.kron(sp.diags(self.ords.weights), sp.kron(sp.identity(R), self.mass), format="csr")

    def block_mass(self, region: Region = None) -> sp.csr_matrix:
        """Scalar L2 mass over the region, for angular averages."""
        R = len(self.blocks(region))
        return sp.kron(sp.identity(R), self.mass, format="csr")

    def interior_jump(self, region: Region = None) -> sp.csr_matrix:
        """Scalar sum over the region's interior coarse edges of int [u]^2."""
        blocks = self.blocks(region)
        R = len(blocks)
        out = sp.csr_matrix((R * self.nn, R * self.nn))
        for side in SIDES:
            adj = self.adjacency(blocks, side)
            present = sp.diags(np.asarray(adj.sum(axis=1)).ravel())
            out = out + sp.kron(present, self.face[side]) - sp.kron(adj, self.cross[side])
        return out.tocsr()

    def energy(self, region: Region = None, collision: bool = True) -> sp.csr_matrix:
        """Gradient + (1/H) interior jump energy per ordinate, plus collision."""
        blocks = self.blocks(region)
        R = len(blocks)
        scalar = sp.kron(sp.identity(R), self.stiffness) + self.interior_jump(blocks) / self.mesh.H
        out = sp.kron(sp.diags(self.ords.weights), scalar, format="csr")
        if collision:
            out = out + self.collision(blocks, absorption=False)
        return out.tocsr()

    def trace(self, region: Region = None) -> sp.csr_matrix:
        """Matrix of the W-norm: sum_i alpha_i 1/2 sum_K int_dK |v_i.n| u_i^2."""
        blocks = self.blocks(region)
        R = len(blocks)
        mats = []
        for i in range(self.m):
            f = sum(abs(self.slope[i, q]) * self.face[side] for q, side in enumerate(SIDES))
            mats.append(0.5 * self.ords.weights[i] * sp.kron(sp.identity(R), f))
        return self._blockdiag(mats)

    def s_matrix(self, region: Region = None, mass: bool = True, collision: bool = True) -> sp.csr_matrix:
        out = self.trace(region)
        if collision:
            out = out + self.collision(region, absorption=mass)
        elif mass:
            out = out + self.epsilon * self.ordinate_mass(region)
        return out.tocsr()

    def jump(self, region: Region = None) -> sp.csr_matrix:
        """Matrix of the V-norm: sum_i alpha_i 1/2 sum_e int |v_i.n| [u_i]^2."""
        blocks = self.blocks(region)
        R = len(blocks)
        mats = []
        for i in range(self.m):
            acc = sp.csr_matrix((R * self.nn, R * self.nn))
            for q, side in enumerate(SIDES):
                s = abs(self.slope[i, q])
                if s == 0:
                    continue
                acc = acc + s * (
                    sp.kron(sp.identity(R), self.face[side]) - sp.kron(self.adjacency(blocks, side), self.cross[side])
                )
            mats.append(0.5 * self.ords.weights[i] * acc)
        return self._blockdiag(mats)

    # ------------------------------------------------------------------ inflow

    def _face_quadrature(self, b: int, side: str) -> tuple[np.ndarray, np.ndarray]:
        """Gauss points (nf, 2, 2) on each fine sub-edge, and the face's node coordinates."""
        coords = self.mesh.node_coords(b)[self.mesh.face_local_nodes[side]]
        a, c = coords[:-1], coords[1:]
        pts = a[:, None, :] + (c - a)[:, None, :] * _GAUSS_XI[None, :, None]
        return pts, coords

    def inflow_load(self, region: Region, g: InflowData | str) -> np.ndarray:
        """Load vector of the inflow data entering the region's boundary."""
        if isinstance(g, str):
            g = boundary_data(g)
        blocks = self.blocks(region)
        R = len(blocks)
        out = np.zeros(self.n_dofs(blocks))
        pos = {b: r for r, b in enumerate(blocks)}
        for i, v in enumerate(self.ords.directions):
            for b, side, s in inflow_faces(self.mesh, blocks, v):
                pts, _ = self._face_quadrature(b, side)
                gv = g(pts, v) * _GAUSS_W[None, :] * self.face_length[side]
                w0 = (gv * (1.0 - _GAUSS_XI)[None, :]).sum(axis=1)
                w1 = (gv * _GAUSS_XI[None, :]).sum(axis=1)
                face_load = np.zeros(self.mesh.n_side)
                face_load[:-1] += w0
                face_load[1:] += w1
                idx = i * R * self.nn + pos[b] * self.nn + self.mesh.face_local_nodes[side]
                out[idx] += -s * self.ords.weights[i] * face_load
        return out

    def inflow_energy(self, region: Region, g: InflowData | str) -> float:
        """sum_i alpha_i int_{inflow} |v_i.n| g_i^2 with the same edge quadrature."""
        if isinstance(g, str):
            g = boundary_data(g)
        blocks = self.blocks(region)
        total = 0.0
        for i, v in enumerate(self.ords.directions):
            for b, side, s in inflow_faces(self.mesh, blocks, v):
                pts, _ = self._face_quadrature(b, side)
                gv = g(pts, v)
                total += -s * self.ords.weights[i] * self.face_length[side] * float((_GAUSS_W * gv**2).sum())
        return total

    def inflow_matrix(self, region: Region, i: int) -> tuple[sp.csr_matrix, np.ndarray]:
        """Map nodal data on J^i(region) to the load vector.

        Returns the (n_dofs, |J^i|) matrix and the sorted geometric node ids of J^i.
        """
        blocks = self.blocks(region)
        R = len(blocks)
        v = self.ords.directions[i]
        gids = upwind_nodes(self.mesh, blocks, v)
        pos = {b: r for r, b in enumerate(blocks)}
        rows, cols, data = [], [], []
        for b, side, s in inflow_faces(self.mesh, blocks, v):
            own = i * R * self.nn + pos[b] * self.nn + self.mesh.face_local_nodes[side]
            col = np.searchsorted(gids, self.mesh.face_node_ids(b, side))
            rr, cc = np.meshgrid(own, col, indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            data.append((-s * self.ords.weights[i] * self.face_mass_1d[side]).ravel())
        shape = (self.n_dofs(blocks), len(gids))
        if not rows:
            return sp.csr_matrix(shape), gids
        mat = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape)
        return mat, gids


# ==============================================================================
# Forms on fields
# ==============================================================================


def _assembler(mesh, ords, media=None, epsilon=None, assembler=None) -> DGAssembler:
    return assembler if assembler is not None else DGAssembler(mesh, ords, media, epsilon)


def bilinear_a(
    u: KineticField,
    w: KineticField,
    mesh: NestedMesh,
    ords: OrdinateSet,
    assembler: Optional[DGAssembler] = None,
) -> float:
    u.check_layout(w)
    asm = _assembler(mesh, ords, assembler=assembler)
    return float(w.flat() @ (asm.transport(u.blocks) @ u.flat()))


def bilinear_l(
    u: KineticField,
    w: KineticField,
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    assembler: Optional[DGAssembler] = None,
) -> float:
    u.check_layout(w)
    asm = _assembler(mesh, ords, media, epsilon, assembler)
    return float(w.flat() @ (asm.collision(u.blocks) @ u.flat()))


def functional_F(
    w: KineticField,
    g: InflowData | str,
    mesh: NestedMesh,
    ords: OrdinateSet,
    assembler: Optional[DGAssembler] = None,
) -> float:
    asm = _assembler(mesh, ords, assembler=assembler)
    return float(asm.inflow_load(w.blocks, g) @ w.flat())


# ==============================================================================
# Solvers
# ==============================================================================


def factorize(matrix: sp.spmatrix, stage: str, block: Optional[int] = None) -> spla.SuperLU:
    try:
        return spla.splu(sp.csc_matrix(matrix))
    except RuntimeError as e:
        raise NumericalFailureError(
            "sparse LU factorization failed", stage=stage, block=block, diagnostics={"error": str(e)}
        ) from e


def relative_residual(matrix: sp.spmatrix, x: np.ndarray, b: np.ndarray) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(matrix @ x - b)
    return float(r / nb) if nb > 0 else float(r)


def solve_fine(
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    g: InflowData | str,
    assembler: Optional[DGAssembler] = None,
) -> KineticField:
    """Reference fine-scale solution of a(u, w) + l(u, w) = F(w) on the whole domain."""
    asm = _assembler(mesh, ords, media, epsilon, assembler)
    blocks = asm.blocks()
    op = asm.operator(blocks)
    load = asm.inflow_load(blocks, g)
    if not np.any(load):
        return KineticField.zeros(blocks, ords.m, asm.nn)
    u = factorize(op, stage="fine_solve").solve(load)
    res = relative_residual(op, u, load)
    logger.debug(f"Fine solve: {op.shape[0]} unknowns, relative residual {res:.2e}")
    if res > 1e-8:
        logger.warning(f"Fine solve residual {res:.2e} above 1e-8")
    return KineticField.from_flat(blocks, ords.m, u)


def local_solve(
    assembler: DGAssembler,
    region: Region,
    data: dict[int, np.ndarray],
    stage: str = "local_solve",
    block: Optional[int] = None,
) -> np.ndarray:
    """Solve the region problem for nodal inflow data.

    `data[i]` holds columns of values on J^i(region) (sorted geometric ids) for
    ordinate i; ordinates absent from `data` receive zero inflow. All columns
    share one factorization. Returns (n_dofs, total columns) in ordinate order.
    """
    blocks = assembler.blocks(region)
    rhs = []
    for i in sorted(data):
        mat, gids = assembler.inflow_matrix(blocks, i)
        d = np.asarray(data[i], dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.shape[0] != len(gids):
            raise InvalidArgumentError(
                f"ordinate {i}: data has {d.shape[0]} rows, inflow set has {len(gids)} nodes"
            )
        rhs.append(np.asarray(mat @ d))
    if not rhs:
        return np.zeros((assembler.n_dofs(blocks), 0))
    rhs_all = np.hstack(rhs)
    lu = factorize(assembler.operator(blocks), stage=stage, block=block)
    return lu.solve(rhs_all)


@dataclass
class GalerkinSolution:
    coefficients: np.ndarray
    field: np.ndarray
    residual: float


def galerkin_solve(
    operator: sp.spmatrix,
    load: np.ndarray,
    basis: sp.spmatrix | np.ndarray,
    stage: str = "galerkin_solve",
) -> GalerkinSolution:
    """Solve P^T A P c = P^T b and return c, P c and the coarse relative residual."""
    basis = sp.csr_matrix(basis)
    coarse = basis.T @ (operator @ basis)
    rhs = basis.T @ load
    n = coarse.shape[0]
    if n <= DENSE_LIMIT:
        dense = coarse.toarray()
        try:
            c = sla.solve(dense, rhs)
        except sla.LinAlgError as e:
            raise NumericalFailureError(
                "coarse system is singular", stage=stage, diagnostics={"dim": n, "error": str(e)}
            ) from e
        res = relative_residual(dense, c, rhs)
    else:
        c = factorize(coarse, stage=stage).solve(rhs)
        res = relative_residual(coarse, c, rhs)
    if not np.all(np.isfinite(c)):
        raise NumericalFailureError("non-finite Galerkin coefficients", stage=stage, diagnostics={"dim": n})
    return GalerkinSolution(c, basis @ c, res)


def dump_solution(
    field: KineticField,
    mesh: NestedMesh,
    ords: OrdinateSet,
    path: str | Path,
) -> Path:
    """CSV with one row per (block, node): coordinates, per-ordinate values and the angular average."""
    header = ["block", "node", "x", "y"] + [f"u_{i + 1}" for i in range(ords.m)] + ["ubar"]
    ubar = field.average(ords.weights)

    def rows():
        for r, b in enumerate(field.blocks):
            xy = mesh.node_coords(b)
            for k in range(field.nn):
                yield [b, k, float(xy[k, 0]), float(xy[k, 1])] + [
                    float(field.values[i, r, k]) for i in range(ords.m)
                ] + [float(ubar[r, k])]

    out = write_csv(path, header, rows())
    logger.info(f"Solution written to {out}")
    return out
