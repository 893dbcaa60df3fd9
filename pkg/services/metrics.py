"""Norms, error quantities and diagnostics for kinetic fields."""

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from services.boundary import InflowData
from services.dg_fine import DGAssembler, KineticField
from services.errors import InvalidArgumentError
from services.media import MediaSpec
from services.mesh import NestedMesh
from services.offline import MultiscaleSpace
from services.ordinates import OrdinateSet
from services.snapshot import SnapshotSpace


def _asm(mesh, ords, media=None, epsilon=None, assembler=None) -> DGAssembler:
    return assembler if assembler is not None else DGAssembler(mesh, ords, media, epsilon)


def _quad(matrix: sp.spmatrix, u: KineticField) -> float:
    x = u.flat()
    return float(x @ (matrix @ x))


def _sqrt(value: float) -> float:
    # round-off can leave tiny negatives in a PSD quadratic form
    return math.sqrt(max(value, 0.0))


def norm_V(u: KineticField, mesh: NestedMesh, ords: OrdinateSet, assembler: Optional[DGAssembler] = None) -> float:
    return _sqrt(_quad(_asm(mesh, ords, assembler=assembler).jump(u.blocks), u))


def norm_W(u: KineticField, mesh: NestedMesh, ords: OrdinateSet, assembler: Optional[DGAssembler] = None) -> float:
    return _sqrt(_quad(_asm(mesh, ords, assembler=assembler).trace(u.blocks), u))


def norm_tildeV(
    u: KineticField,
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    assembler: Optional[DGAssembler] = None,
) -> float:
    asm = _asm(mesh, ords, media, epsilon, assembler)
    return _sqrt(_quad(asm.jump(u.blocks), u) + _quad(asm.collision(u.blocks), u))


def norm_tildeW(
    u: KineticField,
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    assembler: Optional[DGAssembler] = None,
) -> float:
    asm = _asm(mesh, ords, media, epsilon, assembler)
    return _sqrt(_quad(asm.trace(u.blocks), u) + _quad(asm.collision(u.blocks), u))


def norm_energy(
    u: KineticField,
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    assembler: Optional[DGAssembler] = None,
) -> float:
    asm = _asm(mesh, ords, media, epsilon, assembler)
    return _sqrt(_quad(asm.energy(u.blocks), u))


@dataclass
class NormReport:
    V: float
    W: float
    tilde_V: float
    tilde_W: float
    energy: float

    @classmethod
    def from_field(cls, u: KineticField, assembler: DGAssembler) -> "NormReport":
        mesh, ords = assembler.mesh, assembler.ords
        v2 = _quad(assembler.jump(u.blocks), u)
        w2 = _quad(assembler.trace(u.blocks), u)
        l2 = _quad(assembler.collision(u.blocks), u)
        return cls(
            V=_sqrt(v2),
            W=_sqrt(w2),
            tilde_V=_sqrt(v2 + l2),
            tilde_W=_sqrt(w2 + l2),
            energy=norm_energy(u, mesh, ords, assembler.media, assembler.epsilon, assembler),
        )

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def errors_e1_e2(
    u_h: KineticField,
    u_H: KineticField,
    ords: OrdinateSet,
    mesh: NestedMesh,
    assembler: Optional[DGAssembler] = None,
) -> tuple[float, float]:
    """Relative L2 errors of all ordinates (e1) and of the angular average (e2)."""
    u_h.check_layout(u_H)
    asm = _asm(mesh, ords, assembler=assembler)
    mass = asm.ordinate_mass(u_h.blocks)
    diff = u_h - u_H
    den1 = _quad(mass, u_h)
    bar_h = u_h.average(ords.weights).reshape(-1)
    bar_d = diff.average(ords.weights).reshape(-1)
    scalar = asm.block_mass(u_h.blocks)
    den2 = float(bar_h @ (scalar @ bar_h))
    if den1 <= 0 or den2 <= 0:
        raise InvalidArgumentError("reference solution is zero; relative errors undefined")
    e1 = _sqrt(_quad(mass, diff) / den1)
    e2 = _sqrt(float(bar_d @ (scalar @ bar_d)) / den2)
    return e1, e2


def snapshot_ratio(space: MultiscaleSpace, spaces: Sequence[SnapshotSpace]) -> float:
    return space.dim / sum(s.dim for s in spaces)


def stability_margin(u: KineticField, g: InflowData | str, assembler: DGAssembler) -> float:
    """Inflow data energy minus (1/2 |u|_V^2 + l(u, u)); nonnegative for stable solutions."""
    lhs = 0.5 * _quad(assembler.jump(u.blocks), u) + _quad(assembler.collision(u.blocks), u)
    return assembler.inflow_energy(u.blocks, g) - lhs


def galerkin_defect(
    u_ref: KineticField,
    u: KineticField,
    basis: sp.spmatrix | np.ndarray,
    assembler: DGAssembler,
) -> float:
    """Largest (a + l)(u_ref - u, w) over basis columns w, relative to the same for u_ref."""
    op = assembler.operator(u_ref.blocks)
    basis = sp.csr_matrix(basis)
    defect = np.abs(basis.T @ (op @ (u_ref - u).flat()))
    scale = np.abs(basis.T @ (op @ u_ref.flat())).max()
    return float(defect.max() / scale) if scale > 0 else float(defect.max())


def anisotropy(u: KineticField | np.ndarray, weights: np.ndarray) -> float:
    """sum alpha_i (u_i - ubar)^2 over ubar^2, summed over nodes; 0 for isotropic fields."""
    values = u.values if isinstance(u, KineticField) else np.asarray(u)
    ubar = np.tensordot(weights, values, axes=(0, 0))
    spread = np.tensordot(weights, (values - ubar[None]) ** 2, axes=(0, 0)).sum()
    mean = float((ubar**2).sum())
    return float(spread / mean) if mean > 0 else math.inf


def theorem_ratio(
    u_snap: KineticField,
    u_H: KineticField,
    lambda_star: float,
    overlap: int,
    assembler: DGAssembler,
) -> float:
    """|u_snap - u_H|^2_tildeV * lambda_star / (M |u_snap|^2_Energy); bounded by a constant."""
    if not math.isfinite(lambda_star):
        return math.nan
    diff = u_snap - u_H
    num = _quad(assembler.jump(diff.blocks), diff) + _quad(assembler.collision(diff.blocks), diff)
    den = overlap * _quad(assembler.energy(u_snap.blocks), u_snap)
    return num * lambda_star / den if den > 0 else math.nan
