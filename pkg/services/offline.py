"""Energy-minimizing extensions, local spectral pencils and the offline space."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from config.logger import get_logger
from services.dg_fine import DGAssembler
from services.errors import InvalidArgumentError, NumericalFailureError
from services.media import MediaSpec
from services.mesh import NestedMesh, oversample
from services.ordinates import OrdinateSet
from services.snapshot import SnapshotSpace, build_snapshots, det_local, embed_bases, ran_local
from utils.helpers import run_blockwise

logger = get_logger(__name__)

RIDGE_FACTOR = 1e-12
ARTIFACT_VERSION = 1


def ridge(matrix: np.ndarray) -> float:
    """Ridge size 1e-12 * trace / dim when the smallest eigenvalue is below it, else 0."""
    n = matrix.shape[0]
    if n == 0:
        return 0.0
    threshold = RIDGE_FACTOR * abs(np.trace(matrix)) / n
    if threshold == 0:
        return 0.0
    lam_min = float(np.linalg.eigvalsh(matrix)[0])
    return threshold if lam_min < threshold else 0.0


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


# ==============================================================================
# Extension
# ==============================================================================


@dataclass(eq=False)
class ExtensionOperator:
    block: int
    region: tuple[int, ...]
    basis: sp.csr_matrix  # region snapshot basis, (n_dofs, total dim)
    coefficients: np.ndarray  # (total dim, dim_j); rows of block j are the identity
    pinned: slice
    reduced_energy: np.ndarray  # basis^T Q basis
    ridge: float = 0.0

    @property
    def extended(self) -> np.ndarray:
        """Extended snapshots as region fields, (n_dofs, dim_j)."""
        return np.asarray(self.basis @ self.coefficients)

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.coefficients.shape[0], dtype=bool)
        mask[self.pinned] = False
        return np.flatnonzero(mask)


def energy_extend(
    spaces: Sequence[SnapshotSpace],
    mesh: NestedMesh,
    j: int,
    layers: int,
    assembler: DGAssembler,
) -> ExtensionOperator:
    """Minimize the region energy over neighbour coefficients with block j's part pinned.

    `spaces` is indexed by block id and must cover the oversampled region.
    """
    region = oversample(mesh, j, layers).blocks
    bases = [spaces[b].basis for b in region]
    phi = embed_bases(assembler, region, bases)
    q = phi.T @ (assembler.energy(region) @ phi)
    qc = _sym(q.toarray() if sp.issparse(q) else np.asarray(q))

    offsets = np.cumsum([0] + [b.shape[1] for b in bases])
    pos = region.index(j)
    pinned = slice(int(offsets[pos]), int(offsets[pos + 1]))
    dim_j = pinned.stop - pinned.start
    coef = np.zeros((qc.shape[0], dim_j))
    coef[pinned] = np.eye(dim_j)

    free = np.ones(qc.shape[0], dtype=bool)
    free[pinned] = False
    applied = 0.0
    if free.any():
        qff = qc[np.ix_(free, free)]
        qfj = qc[np.ix_(free, ~free)]
        applied = ridge(qff)
        if applied:
            logger.warning(f"Extension ridge {applied:.3e} on the free system", extra={"block": j})
            qff = qff + applied * np.eye(qff.shape[0])
        try:
            coef[free] = -sla.solve(qff, qfj, assume_a="sym")
        except sla.LinAlgError as e:
            raise NumericalFailureError(
                "free-block extension system is singular",
                stage="energy_extend",
                block=j,
                diagnostics={"free_dim": int(free.sum()), "ridge": applied},
            ) from e
    return ExtensionOperator(j, region, phi, coef, pinned, qc, applied)


# ==============================================================================
# Spectral pencil
# ==============================================================================


@dataclass(eq=False)
class SpectralPencil:
    block: int
    A: np.ndarray
    S: np.ndarray
    snapshot_basis: np.ndarray  # (m * nn, dim) un-extended snapshots of the block
    eigenvalues: Optional[np.ndarray] = None
    eigenvectors: Optional[np.ndarray] = None  # columns S-orthonormal
    ridge: float = 0.0

    @property
    def dim(self) -> int:
        return self.A.shape[0]


def assemble_pencil(
    ext: ExtensionOperator,
    assembler: DGAssembler,
    snapshot_basis: Optional[np.ndarray] = None,
) -> SpectralPencil:
    """a^j and s^j evaluated on the extended snapshots over the oversampled region."""
    psi = ext.extended
    a = psi.T @ (assembler.energy(ext.region) @ psi)
    s = psi.T @ (assembler.s_matrix(ext.region) @ psi)
    if snapshot_basis is None:
        snapshot_basis = psi[assembler.dof_indices(ext.region, [ext.block]), :]
    return SpectralPencil(ext.block, _sym(np.asarray(a)), _sym(np.asarray(s)), snapshot_basis)


def leading_order_pencil(ext: ExtensionOperator, assembler: DGAssembler) -> SpectralPencil:
    """Pencil without the epsilon-dependent terms: gradient + jump against boundary traces."""
    psi = ext.extended
    a = psi.T @ (assembler.energy(ext.region, collision=False) @ psi)
    s = psi.T @ (assembler.trace(ext.region) @ psi)
    basis = psi[assembler.dof_indices(ext.region, [ext.block]), :]
    return SpectralPencil(ext.block, _sym(np.asarray(a)), _sym(np.asarray(s)), basis)


def solve_gep(pencil: SpectralPencil) -> SpectralPencil:
    """Ascending eigenpairs of A c = lambda S c with S-orthonormal vectors."""
    A, S = pencil.A, pencil.S
    applied = ridge(S)
    if applied:
        logger.warning(f"GEP ridge {applied:.3e} on S", extra={"block": pencil.block})
    for attempt in range(2):
        try:
            w, v = sla.eigh(A, S + applied * np.eye(S.shape[0]))
            break
        except sla.LinAlgError as e:
            if attempt == 0:
                applied = max(applied, RIDGE_FACTOR * abs(np.trace(S)) / max(S.shape[0], 1))
                logger.warning(f"GEP retrying with ridge {applied:.3e}", extra={"block": pencil.block})
                continue
            raise NumericalFailureError(
                "generalized eigenproblem failed",
                stage="solve_gep",
                block=pencil.block,
                diagnostics={"dim": S.shape[0], "ridge": applied, "error": str(e)},
            ) from e
    pencil.eigenvalues = w
    pencil.eigenvectors = v
    pencil.ridge = applied
    return pencil


# ==============================================================================
# Offline space
# ==============================================================================


@dataclass(eq=False)
class MultiscaleSpace:
    counts: list[int]
    modes: list[np.ndarray]  # per block, (dim_j, L_j) coefficients in the snapshot basis
    eigenvalues: list[np.ndarray]
    snapshot_bases: list[np.ndarray]
    lambda_star: float
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(sum(self.counts))

    def local_basis(self, j: int) -> np.ndarray:
        """Block j's multiscale basis fields, (m * nn, L_j)."""
        return self.snapshot_bases[j] @ self.modes[j]


def select_space(
    pencils: Sequence[SpectralPencil],
    L: int | Sequence[int] | str,
    params: Optional[dict[str, Any]] = None,
) -> MultiscaleSpace:
    """Keep the L_j smallest-eigenvalue modes of every block."""
    dims = [p.dim for p in pencils]
    if isinstance(L, str):
        if L != "full":
            raise InvalidArgumentError(f"L must be a count, a list of counts or 'full', got {L!r}")
        counts = list(dims)
    elif isinstance(L, (int, np.integer)):
        counts = [int(L)] * len(pencils)
    else:
        counts = [int(x) for x in L]
        if len(counts) != len(pencils):
            raise InvalidArgumentError(f"{len(counts)} mode counts for {len(pencils)} blocks")
    for j, (c, d) in enumerate(zip(counts, dims)):
        if not 1 <= c <= d:
            raise InvalidArgumentError(f"block {j}: L_j = {c} outside 1..{d}")
    for p in pencils:
        if p.eigenvalues is None:
            solve_gep(p)

    next_values = [p.eigenvalues[c] for p, c in zip(pencils, counts) if c < p.dim]
    lambda_star = float(min(next_values)) if next_values else float("inf")
    return MultiscaleSpace(
        counts,
        [p.eigenvectors[:, :c] for p, c in zip(pencils, counts)],
        [p.eigenvalues for p in pencils],
        [p.snapshot_basis for p in pencils],
        lambda_star,
        dict(params or {}),
    )


# ==============================================================================
# Pipeline and persistence
# ==============================================================================


@dataclass(eq=False)
class OfflineArtifact:
    spaces: list[SnapshotSpace]
    pencils: list[SpectralPencil]
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def snapshot_dim(self) -> int:
        return sum(s.dim for s in self.spaces)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays: dict[str, np.ndarray] = {}
        for s, p in zip(self.spaces, self.pencils):
            arrays[f"basis_{s.block}"] = s.basis
            arrays[f"A_{s.block}"] = p.A
            arrays[f"S_{s.block}"] = p.S
            arrays[f"eigenvalues_{s.block}"] = p.eigenvalues
            arrays[f"eigenvectors_{s.block}"] = p.eigenvectors
        meta = {
            "version": ARTIFACT_VERSION,
            "params": self.params,
            "blocks": [
                {"block": s.block, "method": s.method, "raw_dim": s.raw_dim, "seed": s.seed,
                 "k_j": s.k_j, "region": list(s.region), "ridge": p.ridge}
                for s, p in zip(self.spaces, self.pencils)
            ],
        }
        with open(path, "wb") as f:
            np.savez_compressed(f, meta=np.array(json.dumps(meta)), **arrays)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "OfflineArtifact":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != ARTIFACT_VERSION:
                raise InvalidArgumentError(f"offline artifact version {meta.get('version')} not supported")
            spaces, pencils = [], []
            for b in meta["blocks"]:
                j = b["block"]
                basis = data[f"basis_{j}"]
                spaces.append(
                    SnapshotSpace(j, b["method"], basis, b["raw_dim"], seed=b["seed"], k_j=b["k_j"],
                                  region=tuple(b["region"]))
                )
                pencils.append(
                    SpectralPencil(j, data[f"A_{j}"], data[f"S_{j}"], basis,
                                   data[f"eigenvalues_{j}"], data[f"eigenvectors_{j}"], b["ridge"])
                )
        return cls(spaces, pencils, meta["params"])


def build_offline(
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    epsilon: float,
    method: str = "ran",
    k_j: int = 21,
    seed: int = 0,
    layers: int = 1,
    threads: int = 1,
    assembler: Optional[DGAssembler] = None,
) -> OfflineArtifact:
    """Snapshots, extensions, pencils and eigenpairs of every block."""
    asm = assembler if assembler is not None else DGAssembler(mesh, ords, media, epsilon)
    spaces = build_snapshots(mesh, ords, media, epsilon, method, k_j, seed, layers, threads, asm)

    def _block(j: int) -> SpectralPencil:
        ext = energy_extend(spaces, mesh, j, layers, asm)
        pencil = solve_gep(assemble_pencil(ext, asm, spaces[j].basis))
        logger.debug(
            f"Offline pencil dim {pencil.dim}, smallest eigenvalues {pencil.eigenvalues[:3]}",
            extra={"block": j, "epsilon": epsilon},
        )
        return pencil

    pencils = run_blockwise(_block, range(mesh.n_blocks), threads)
    logger.info(f"Offline build finished for {mesh.n_blocks} blocks")
    params = {
        "method": method, "k_j": k_j, "seed": seed, "layers": layers,
        "epsilon": epsilon, "media": media.to_payload(),
    }
    return OfflineArtifact(spaces, pencils, params)


# ==============================================================================
# Small-epsilon study
# ==============================================================================


@dataclass(eq=False)
class EigenStudy:
    block: int
    epsilons: list[float]
    eigenvalues: np.ndarray  # (n_eps, n_modes)
    differences: np.ndarray  # row k: lambda(eps_k) - lambda(eps_{k-1}); first row NaN
    leading_order: np.ndarray  # (n_eps, n_modes) epsilon-free pencil on the same extensions
    lower: np.ndarray  # (n_eps, n_modes) eigenvalue bracket from the leading-order pencil
    upper: np.ndarray
    first_mode_anisotropy: list[float]


def eigenvalue_bracket(full: SpectralPencil, lead: SpectralPencil) -> tuple[np.ndarray, np.ndarray]:
    """Bounds on the full pencil's eigenvalues from the leading-order pencil of the same extensions.

    The collision part of the energy is positive semidefinite, so A0 <= A <= A0 + alpha S0 and
    (1 + s_min) S0 <= S <= (1 + s_max) S0 give, mode by mode,

        lambda0 / (1 + s_max) <= lambda <= (lambda0 + alpha) / (1 + s_min).
    """
    if full.dim != lead.dim:
        raise InvalidArgumentError(f"pencils of dimension {full.dim} and {lead.dim} are not comparable")
    if lead.eigenvalues is None:
        solve_gep(lead)
    eye = np.eye(lead.dim)
    s0 = lead.S + lead.ridge * eye
    alpha = max(float(sla.eigh(full.A - lead.A, s0, eigvals_only=True)[-1]), 0.0)
    shift = sla.eigh(full.S + full.ridge * eye - s0, s0, eigvals_only=True)
    lam0 = lead.eigenvalues
    return lam0 / (1.0 + shift[-1]), (lam0 + alpha) / (1.0 + shift[0])


def _region_spaces(mesh, ords, media, epsilon, region, method, k_j, seed, layers, asm):
    spaces: dict[int, SnapshotSpace] = {}
    for b in region:
        if method == "det":
            spaces[b] = det_local(mesh, ords, media, epsilon, b, assembler=asm)
        else:
            spaces[b] = ran_local(mesh, ords, media, epsilon, b, k_j, seed, layers, assembler=asm)
    return spaces


def eps_limit_study(
    mesh: NestedMesh,
    ords: OrdinateSet,
    media: MediaSpec,
    j: int,
    epsilons: Sequence[float],
    method: str = "ran",
    k_j: int = 21,
    seed: int = 0,
    layers: int = 1,
    n_modes: int = 6,
) -> EigenStudy:
    """Block j's smallest eigenvalues across a descending list of epsilon values."""
    from services.metrics import anisotropy

    epsilons = [float(e) for e in epsilons]
    if len(epsilons) < 2 or any(a <= b for a, b in zip(epsilons, epsilons[1:])):
        raise InvalidArgumentError("epsilon list must be strictly descending with at least 2 entries")
    region = oversample(mesh, j, layers).blocks
    rows, leading, lower, upper = [], [], [], []
    aniso = []
    for eps in epsilons:
        asm = DGAssembler(mesh, ords, media, eps)
        spaces = _region_spaces(mesh, ords, media, eps, region, method, k_j, seed, layers, asm)
        ext = energy_extend(spaces, mesh, j, layers, asm)
        pencil = solve_gep(assemble_pencil(ext, asm, spaces[j].basis))
        n = min(n_modes, pencil.dim)
        rows.append(pencil.eigenvalues[:n])
        mode = (pencil.snapshot_basis @ pencil.eigenvectors[:, 0]).reshape(ords.m, 1, -1)
        aniso.append(anisotropy(mode, ords.weights))
        logger.info(
            f"Eigen study: {np.array2string(pencil.eigenvalues[:n], precision=4)}",
            extra={"block": j, "epsilon": eps},
        )
        lead = solve_gep(leading_order_pencil(ext, asm))
        lo, hi = eigenvalue_bracket(pencil, lead)
        leading.append(lead.eigenvalues[:n])
        lower.append(lo[:n])
        upper.append(hi[:n])
    n = min(len(r) for r in rows)

    def _stack(values):
        return np.array([r[:n] for r in values])

    values = _stack(rows)
    diffs = np.full_like(values, np.nan)
    diffs[1:] = values[1:] - values[:-1]
    return EigenStudy(j, epsilons, values, diffs, _stack(leading), _stack(lower), _stack(upper), aniso)
