"""Coarse Galerkin system in the offline space and reconstruction on the fine grid."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from config.logger import get_logger
from services.boundary import InflowData
from services.dg_fine import DENSE_LIMIT, DGAssembler, KineticField, factorize, relative_residual
from services.errors import InvalidArgumentError, NumericalFailureError
from services.media import MediaSpec
from services.mesh import NestedMesh
from services.offline import MultiscaleSpace
from services.ordinates import OrdinateSet
from services.snapshot import embed_bases

logger = get_logger(__name__)


@dataclass(eq=False)
class CoarseSystem:
    A: np.ndarray | sp.csr_matrix  # a(phi_q, phi_p)
    L: np.ndarray | sp.csr_matrix  # l(phi_q, phi_p)
    b: np.ndarray  # F(phi_p)
    basis: sp.csr_matrix  # (n_fine_dofs, dim)
    offsets: np.ndarray  # block j owns columns offsets[j]:offsets[j + 1]
    blocks: tuple[int, ...]
    m: int

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def global_index(self, j: int, mode: int) -> int:
        return int(self.offsets[j] + mode)


def assemble_coarse(
    space: MultiscaleSpace,
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    g: InflowData | str,
    assembler: Optional[DGAssembler] = None,
) -> CoarseSystem:
    """A = P^T A_h P, L = P^T L_h P, b = P^T F_h over the multiscale basis P."""
    built_for = space.params.get("epsilon")
    if built_for is not None and not np.isclose(built_for, epsilon, rtol=1e-14, atol=0.0):
        raise InvalidArgumentError(f"offline space built for epsilon={built_for}, requested {epsilon}")
    media_key = space.params.get("media")
    if media_key is not None and media_key != media.to_payload():
        raise InvalidArgumentError("offline space was built for different media")

    asm = assembler if assembler is not None else DGAssembler(mesh, ords, media, epsilon)
    blocks = asm.blocks()
    basis = embed_bases(asm, blocks, [space.local_basis(j) for j in blocks])
    dense = basis.shape[1] <= DENSE_LIMIT

    def _project(matrix: sp.spmatrix):
        out = basis.T @ (matrix @ basis)
        return out.toarray() if dense else out.tocsr()

    A = _project(asm.transport(blocks))
    L = _project(asm.collision(blocks))
    b = basis.T @ asm.inflow_load(blocks, g)
    offsets = np.cumsum([0] + list(space.counts))
    logger.debug(f"Coarse system assembled: dimension {basis.shape[1]}")
    return CoarseSystem(A, L, np.asarray(b), basis, offsets, blocks, ords.m)


def solve_online(system: CoarseSystem) -> tuple[np.ndarray, KineticField]:
    """Solve (A + L) U = b and reconstruct u_H = sum_p U_p phi_p."""
    matrix = system.A + system.L
    if not np.any(system.b):
        U = np.zeros(system.dim)
    elif sp.issparse(matrix):
        U = factorize(matrix, stage="online_solve").solve(system.b)
    else:
        try:
            U = sla.solve(matrix, system.b)
        except sla.LinAlgError as e:
            raise NumericalFailureError(
                "coarse system is singular", stage="online_solve", diagnostics={"dim": system.dim}
            ) from e
    if not np.all(np.isfinite(U)):
        raise NumericalFailureError("non-finite coarse solution", stage="online_solve", diagnostics={"dim": system.dim})
    res = relative_residual(matrix, U, system.b)
    logger.debug(f"Online solve: dimension {system.dim}, relative residual {res:.2e}")
    if res > 1e-10:
        logger.warning(f"Online residual {res:.2e} above 1e-10")
    u_H = KineticField.from_flat(system.blocks, system.m, system.basis @ U)
    return U, u_H
