"""Per-block snapshot spaces and the global snapshot Galerkin solve."""

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from config.logger import get_logger
from services.boundary import InflowData
from services.dg_fine import DGAssembler, KineticField, galerkin_solve, local_solve
from services.errors import InvalidArgumentError, NumericalFailureError
from services.media import MediaSpec
from services.mesh import NestedMesh, oversample
from services.ordinates import OrdinateSet
from utils.helpers import run_blockwise

logger = get_logger(__name__)

RANK_TOL = 1e-10


@dataclass(eq=False)
class SnapshotSpace:
    """Snapshots of one block, columns laid out as (ordinate, local node)."""

    block: int
    method: Literal["det", "ran"]
    basis: np.ndarray  # (m * nn, dim)
    raw_dim: int
    slots: list[tuple[int, int]] = field(default_factory=list)  # det: (ordinate, node gid)
    seed: Optional[int] = None
    k_j: Optional[int] = None
    region: tuple[int, ...] = ()
    extended: Optional[np.ndarray] = None  # ran: unrestricted fields on the region

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def ran_data(seed: int, j: int, n: int, l: int, size: int) -> np.ndarray:
    """Gaussian boundary sample keyed by (seed, block, ordinate, index), not by schedule."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, j, n, l]))
    return rng.standard_normal(size)


def _assembler(mesh, ords, media, epsilon, assembler) -> DGAssembler:
    return assembler if assembler is not None else DGAssembler(mesh, ords, media, epsilon)


def det_local(
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    j: int,
    assembler: Optional[DGAssembler] = None,
) -> SnapshotSpace:
    """One local solve per (ordinate n, inflow node of ordinate n) with unit nodal data."""
    mesh.check_block(j)
    asm = _assembler(mesh, ords, media, epsilon, assembler)
    region = (j,)
    data = {}
    slots = []
    for n in range(ords.m):
        _, gids = asm.inflow_matrix(region, n)
        if len(gids) == 0:
            continue
        data[n] = np.eye(len(gids))
        slots.extend((n, int(g)) for g in gids)
    basis = local_solve(asm, region, data, stage="det_local", block=j)
    logger.debug(f"DetLocal: {basis.shape[1]} snapshots", extra={"block": j, "epsilon": epsilon})
    return SnapshotSpace(j, "det", basis, basis.shape[1], slots=slots, region=region)


def orthonormal_filter(snapshots: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Left singular vectors with singular value above tol * largest."""
    if snapshots.shape[1] == 0:
        return snapshots
    u, s, _ = np.linalg.svd(snapshots, full_matrices=False)
    if s[0] == 0:
        return u[:, :0]
    return u[:, s > tol * s[0]]


def ran_local(
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    j: int,
    k_j: int,
    seed: int,
    layers: int = 1,
    keep_extended: bool = False,
    assembler: Optional[DGAssembler] = None,
) -> SnapshotSpace:
    """Gaussian inflow solves on the oversampled region, restricted to block j."""
    if k_j < 1:
        raise InvalidArgumentError(f"k_j must be >= 1, got {k_j}")
    asm = _assembler(mesh, ords, media, epsilon, assembler)
    region = oversample(mesh, j, layers).blocks
    data = {}
    for n in range(ords.m):
        _, gids = asm.inflow_matrix(region, n)
        if len(gids) == 0:
            continue
        data[n] = np.column_stack([ran_data(seed, j, n, l, len(gids)) for l in range(k_j)])
    extended = local_solve(asm, region, data, stage="ran_local", block=j)
    restricted = extended[asm.dof_indices(region, [j]), :]
    basis = orthonormal_filter(restricted)
    dropped = restricted.shape[1] - basis.shape[1]
    if dropped:
        logger.warning(
            f"RanLocal rank filter dropped {dropped} of {restricted.shape[1]} snapshots",
            extra={"block": j, "epsilon": epsilon},
        )
    if basis.shape[1] == 0:
        raise NumericalFailureError("snapshot space is empty after rank filtering", stage="ran_local", block=j)
    return SnapshotSpace(
        j,
        "ran",
        basis,
        restricted.shape[1],
        seed=seed,
        k_j=k_j,
        region=region,
        extended=extended if keep_extended else None,
    )


def build_snapshots(
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    method: Literal["det", "ran"] = "ran",
    k_j: int = 21,
    seed: int = 0,
    layers: int = 1,
    threads: int = 1,
    assembler: Optional[DGAssembler] = None,
) -> list[SnapshotSpace]:
    """Snapshot spaces of every block, in block order."""
    asm = _assembler(mesh, ords, media, epsilon, assembler)
    if method == "det":
        spaces = run_blockwise(
            lambda j: det_local(mesh, ords, media, epsilon, j, assembler=asm), range(mesh.n_blocks), threads
        )
    elif method == "ran":
        spaces = run_blockwise(
            lambda j: ran_local(mesh, ords, media, epsilon, j, k_j, seed, layers, assembler=asm),
            range(mesh.n_blocks),
            threads,
        )
    else:
        raise InvalidArgumentError(f"unknown snapshot method {method!r}")
    logger.info(f"Built {method} snapshot spaces: total dimension {sum(s.dim for s in spaces)}")
    return spaces


def embed_bases(
    assembler: DGAssembler,
    region: Sequence[int],
    bases: Sequence[np.ndarray],
) -> sp.csr_matrix:
    """Block-diagonal basis matrix placing each block's columns in the region layout."""
    region = tuple(region)
    mats = []
    for b, basis in zip(region, bases):
        rows = assembler.dof_indices(region, [b])
        coo = sp.coo_matrix(basis)
        mats.append(
            sp.csr_matrix(
                (coo.data, (rows[coo.row], coo.col)),
                shape=(assembler.n_dofs(region), basis.shape[1]),
            )
        )
    return sp.hstack(mats, format="csr")


def solve_snapshot(
    spaces: Sequence[SnapshotSpace],
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    g: InflowData | str,
    assembler: Optional[DGAssembler] = None,
) -> KineticField:
    """Galerkin solution in the direct sum of all blocks' snapshot spaces."""
    if len(spaces) != mesh.n_blocks or any(s.dim == 0 for s in spaces):
        raise InvalidArgumentError("every block needs a non-empty snapshot space")
    asm = _assembler(mesh, ords, media, epsilon, assembler)
    blocks = asm.blocks()
    basis = embed_bases(asm, blocks, [s.basis for s in spaces])
    sol = galerkin_solve(asm.operator(blocks), asm.inflow_load(blocks, g), basis, stage="snapshot_solve")
    logger.debug(f"Snapshot solve: {basis.shape[1]} unknowns, residual {sol.residual:.2e}")
    return KineticField.from_flat(blocks, ords.m, sol.field)
