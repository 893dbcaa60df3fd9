"""
Tests for the coarse Galerkin system and the online solve.
"""

import math

import numpy as np
import pytest

from evals.config import RECOVERY_RTOL, SMALL_EPSILON, STABILITY_SLACK
from services.dg_fine import solve_fine
from services.errors import InvalidArgumentError
from services.media import MediaSpec
from services.metrics import galerkin_defect, norm_tildeV, stability_margin, theorem_ratio
from services.offline import build_offline, select_space
from services.online import assemble_coarse, solve_online
from services.snapshot import solve_snapshot


@pytest.fixture
def offline(assembler):
    return build_offline(
        assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, k_j=3, seed=4, assembler=assembler
    )


def _solve(assembler, space, g="cosine"):
    system = assemble_coarse(
        space, assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, g, assembler=assembler
    )
    return system, *solve_online(system)


class TestAssembleCoarse:
    """Projected matrices and the global mode numbering."""

    def test_dimensions(self, assembler, offline):
        space = select_space(offline.pencils, 2)
        system, U, u_H = _solve(assembler, space)
        assert system.dim == space.dim == 2 * assembler.mesh.n_blocks
        assert system.A.shape == system.L.shape == (system.dim, system.dim)
        assert U.shape == (system.dim,)
        assert u_H.values.shape == (assembler.m, assembler.mesh.n_blocks, assembler.nn)
        assert system.global_index(3, 1) == 7

    def test_zero_inflow(self, assembler, offline):
        system, U, u_H = _solve(assembler, select_space(offline.pencils, 3), g="zero")
        assert not system.b.any()
        assert not U.any()
        assert not u_H.values.any()

    def test_collision_block_symmetric(self, assembler, offline):
        system, _, _ = _solve(assembler, select_space(offline.pencils, 3))
        np.testing.assert_allclose(system.L, system.L.T, atol=1e-12 * np.abs(system.L).max())

    def test_epsilon_mismatch_rejected(self, assembler, offline):
        space = select_space(offline.pencils, 2, params={"epsilon": 1e-3})
        with pytest.raises(InvalidArgumentError):
            assemble_coarse(space, assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, "cosine")

    def test_media_mismatch_rejected(self, assembler, offline):
        space = select_space(offline.pencils, 2, params={"media": MediaSpec("contrast").to_payload()})
        with pytest.raises(InvalidArgumentError):
            assemble_coarse(space, assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, "cosine")


class TestSolveOnline:
    """Online solutions in the offline space."""

    def test_full_space_recovers_snapshot_solution(self, assembler, offline):
        mesh, ords, media = assembler.mesh, assembler.ords, assembler.media
        _, _, u_H = _solve(assembler, select_space(offline.pencils, "full"))
        u_snap = solve_snapshot(offline.spaces, mesh, ords, media, SMALL_EPSILON, "cosine", assembler=assembler)
        diff = norm_tildeV(u_snap - u_H, mesh, ords, media, SMALL_EPSILON, assembler=assembler)
        ref = norm_tildeV(u_snap, mesh, ords, media, SMALL_EPSILON, assembler=assembler)
        assert diff <= RECOVERY_RTOL * ref

    @pytest.mark.parametrize("L", [1, 3, "full"])
    def test_galerkin_orthogonality(self, assembler, offline, L):
        mesh, ords, media = assembler.mesh, assembler.ords, assembler.media
        system, _, u_H = _solve(assembler, select_space(offline.pencils, L))
        u_h = solve_fine(mesh, ords, media, SMALL_EPSILON, "cosine", assembler=assembler)
        assert galerkin_defect(u_h, u_H, system.basis, assembler) < 1e-8

    @pytest.mark.parametrize("L", [1, 4])
    def test_stability(self, assembler, offline, L):
        _, _, u_H = _solve(assembler, select_space(offline.pencils, L))
        scale = assembler.inflow_energy(None, "cosine")
        assert stability_margin(u_H, "cosine", assembler) >= -STABILITY_SLACK * scale

    def test_bound_ratio(self, assembler, offline):
        mesh, ords, media = assembler.mesh, assembler.ords, assembler.media
        u_snap = solve_snapshot(offline.spaces, mesh, ords, media, SMALL_EPSILON, "cosine", assembler=assembler)
        space = select_space(offline.pencils, 2)
        _, _, u_H = _solve(assembler, space)
        ratio = theorem_ratio(u_snap, u_H, space.lambda_star, 4, assembler)
        assert math.isfinite(ratio) and ratio >= 0
        full = select_space(offline.pencils, "full")
        assert math.isnan(theorem_ratio(u_snap, u_H, full.lambda_star, 4, assembler))
