"""End-to-end experiment pipeline: fine reference, offline build, online sweeps."""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from cli.models import EIGEN_HEADER, RESULT_HEADER, EigenStudyRow, ExperimentConfig, ResultRow
from config.logger import get_logger
from config.settings import settings
from services.cache import ArtifactCache, offline_cache_key
from services.dg_fine import DGAssembler, dump_solution, solve_fine
from services.metrics import errors_e1_e2, snapshot_ratio, stability_margin, theorem_ratio
from services.mesh import overlap_constant
from services.offline import OfflineArtifact, build_offline, eps_limit_study, select_space
from services.online import assemble_coarse, solve_online
from services.snapshot import solve_snapshot
from utils.helpers import write_csv

logger = get_logger(__name__)


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    csv_path: Optional[Path] = None
    snapshot_errors: tuple[float, float] = (0.0, 0.0)


@dataclass
class SweepResult:
    rows: list[tuple[float, float, ResultRow]]
    eigen_rows: list[EigenStudyRow] = field(default_factory=list)
    csv_path: Optional[Path] = None
    eigen_path: Optional[Path] = None


class _Clock:
    """Wall-clock timer that reads 0.0 when results must be reproducible."""

    def __init__(self, reproducible: bool):
        self.reproducible = reproducible
        self.start = time.perf_counter()

    def elapsed(self) -> float:
        return 0.0 if self.reproducible else time.perf_counter() - self.start


def _offline(config: ExperimentConfig, mesh, ords, media, asm, cache: Optional[ArtifactCache]) -> OfflineArtifact:
    params = config.offline_params(media)
    key = offline_cache_key(params)
    if cache is not None and config.use_cache:
        artifact = cache.load(key)
        if artifact is not None:
            return artifact
    artifact = build_offline(
        mesh,
        ords,
        media,
        config.epsilon,
        method=config.snapshot_method,
        k_j=config.k_j,
        seed=config.seed,
        layers=config.layers,
        threads=config.threads,
        assembler=asm,
    )
    artifact.params = {**artifact.params, **params}
    if cache is not None and config.use_cache:
        cache.store(key, artifact)
    return artifact


def run_experiment(
    config: ExperimentConfig,
    cache: Optional[ArtifactCache] = None,
    write: bool = True,
) -> ExperimentResult:
    """Fine reference, snapshot spaces, offline spectra, then one online solve per L."""
    mesh = config.build_mesh()
    ords = config.build_ordinates()
    media = config.build_media(mesh)
    asm = DGAssembler(mesh, ords, media, config.epsilon)
    g = config.boundary
    logger.info(
        f"Experiment: {config.nc_x}x{config.nc_y} blocks, nf={config.nf}, m={config.m}, "
        f"eps={config.epsilon}, media={config.media}, method={config.snapshot_method}"
    )

    u_h = solve_fine(mesh, ords, media, config.epsilon, g, assembler=asm)
    logger.info("Fine reference solved", extra={"epsilon": config.epsilon})

    clock = _Clock(config.reproducible)
    if cache is None and config.use_cache:
        cache = ArtifactCache()
    artifact = _offline(config, mesh, ords, media, asm, cache)
    t_offline = clock.elapsed()
    logger.info(f"Offline stage ready, snapshot dimension {artifact.snapshot_dim}")

    u_snap = solve_snapshot(artifact.spaces, mesh, ords, media, config.epsilon, g, assembler=asm)
    snap_errors = errors_e1_e2(u_h, u_snap, ords, mesh, assembler=asm)
    logger.info(f"Snapshot solution errors: e1={snap_errors[0]:.4e}, e2={snap_errors[1]:.4e}")

    overlap = overlap_constant(mesh, config.layers)
    space_params = {key: artifact.params.get(key) for key in ("epsilon", "media")}
    counts: list[int | str] = list(config.L_list) + (["full"] if config.include_full else [])
    rows: list[ResultRow] = []
    u_H = None
    for L in counts:
        clock = _Clock(config.reproducible)
        space = select_space(artifact.pencils, L, params=space_params)
        system = assemble_coarse(space, mesh, ords, media, config.epsilon, g, assembler=asm)
        _, u_H = solve_online(system)
        e1, e2 = errors_e1_e2(u_h, u_H, ords, mesh, assembler=asm)
        row = ResultRow(
            L=L,
            snapshot_ratio=snapshot_ratio(space, artifact.spaces),
            e1=e1,
            e2=e2,
            lambda_star=space.lambda_star,
            t_offline_s=t_offline,
            t_online_s=clock.elapsed(),
        )
        rows.append(row)
        logger.info(f"L={L}: ratio={row.snapshot_ratio:.4f}, e1={e1:.4e}, e2={e2:.4e}, lambda*={space.lambda_star:.4e}")
        logger.debug(
            f"L={L}: stability margin {stability_margin(u_H, g, asm):.3e}, "
            f"bound ratio {theorem_ratio(u_snap, u_H, space.lambda_star, overlap, asm):.3e}"
        )

    result = ExperimentResult(rows, snapshot_errors=snap_errors)
    if config.dump_solution:
        path = settings.resolve_output(config.dump_solution)
        dump_solution(u_h, mesh, ords, path)
        if u_H is not None:
            dump_solution(u_H, mesh, ords, path.with_name(f"{path.stem}_online{path.suffix or '.csv'}"))
    if write:
        result.csv_path = write_csv(
            settings.resolve_output(config.output_csv), RESULT_HEADER, (r.as_row() for r in rows)
        )
        logger.info(f"Results written to {result.csv_path}")
    return result


def sweep_epsilon(
    config: ExperimentConfig,
    epsilons: Sequence[float],
    powers: Optional[Sequence[float]] = None,
    cache: Optional[ArtifactCache] = None,
    study: bool = True,
) -> SweepResult:
    """run_experiment per (power, epsilon), stacked, plus the eigenvalue study on one block."""
    powers = list(powers) if powers else [config.contrast_power]
    stacked: list[tuple[float, float, ResultRow]] = []
    for p in powers:
        for eps in epsilons:
            cfg = config.model_copy(update={"epsilon": float(eps), "contrast_power": float(p)})
            for row in run_experiment(cfg, cache=cache, write=False).rows:
                stacked.append((float(eps), float(p), row))

    result = SweepResult(stacked)
    out = settings.resolve_output(config.output_csv)
    result.csv_path = write_csv(
        out, ["epsilon", "power"] + RESULT_HEADER, ([e, p] + r.as_row() for e, p, r in stacked)
    )
    logger.info(f"Sweep results written to {result.csv_path}")

    descending = sorted({float(e) for e in epsilons}, reverse=True)
    if not study:
        return result
    if len(descending) < 2:
        logger.warning("Eigenvalue study skipped: needs at least two epsilon values")
        return result
    mesh = config.build_mesh()
    ords = config.build_ordinates()
    media = config.build_media(mesh)
    eig = eps_limit_study(
        mesh,
        ords,
        media,
        config.center_block(),
        descending,
        method=config.snapshot_method,
        k_j=config.k_j,
        seed=config.seed,
        layers=config.layers,
    )
    n = eig.eigenvalues.shape[1]
    for r, eps in enumerate(eig.epsilons):
        for k in range(n):
            result.eigen_rows.append(
                EigenStudyRow(
                    epsilon=eps,
                    k=k + 1,
                    lambda_=float(eig.eigenvalues[r, k]),
                    diff=float(eig.differences[r, k]),
                    lambda0=float(eig.leading_order[r, k]),
                    lower=float(eig.lower[r, k]),
                    upper=float(eig.upper[r, k]),
                )
            )
    result.eigen_path = write_csv(
        out.with_name(f"{out.stem}_eigs{out.suffix or '.csv'}"),
        EIGEN_HEADER,
        (row.as_row() for row in result.eigen_rows),
    )
    logger.info(f"Eigenvalue study written to {result.eigen_path}")
    return result
