"""
Tests for the fine upwind DG discretization.

The transport and mass matrices are checked against an independent oracle
that integrates the Q1 hat functions with Gauss quadrature cell by cell.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from evals.config import IDENTITY_RTOL, ORACLE_ATOL, SMALL_EPSILON, SOLVER_RTOL, STABILITY_SLACK
from evals.utils import min_eigenvalue_ratio, random_field, read_csv, relative_difference
from services.boundary import boundary_data
from services.dg_fine import (
    DGAssembler,
    KineticField,
    bilinear_a,
    bilinear_l,
    dump_solution,
    factorize,
    functional_F,
    galerkin_solve,
    relative_residual,
    solve_fine,
)
from services.errors import InvalidArgumentError, NumericalFailureError
from services.media import cell_values, default_contrast_field, oscillatory_media
from services.mesh import NORMALS, TANGENT_TOL, build_nested_mesh
from services.metrics import anisotropy, stability_margin
from services.ordinates import build_ordinates

_G = 0.5 / np.sqrt(3.0)


# ==============================================================================
# Quadrature oracle
# ==============================================================================


def _hat(t: np.ndarray, i: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(t - i))


def _dhat(t: np.ndarray, i: np.ndarray) -> np.ndarray:
    return np.where(np.abs(t - i) < 1.0, -np.sign(t - i), 0.0)


def _q1_basis(mesh, b, pts):
    """Values (nn, P) and gradients (nn, P, 2) of block b's hat functions."""
    ox, oy = mesh.block_origin(b)
    idx = np.arange(mesh.n_side)[:, None]
    tx = (pts[:, 0] - ox)[None, :] / mesh.h_x
    ty = (pts[:, 1] - oy)[None, :] / mesh.h_y
    hx, hy = _hat(tx, idx), _hat(ty, idx)
    dx, dy = _dhat(tx, idx) / mesh.h_x, _dhat(ty, idx) / mesh.h_y
    nn, P = mesh.nodes_per_block, len(pts)
    values = (hy[:, None, :] * hx[None, :, :]).reshape(nn, P)
    gx = (hy[:, None, :] * dx[None, :, :]).reshape(nn, P)
    gy = (dy[:, None, :] * hx[None, :, :]).reshape(nn, P)
    return values, np.stack([gx, gy], axis=-1)


def _cell_points(mesh, b):
    offs = np.array([[-_G, -_G], [_G, -_G], [-_G, _G], [_G, _G]]) * [mesh.h_x, mesh.h_y]
    pts = (mesh.cell_centers(b)[:, None, :] + offs[None]).reshape(-1, 2)
    return pts, mesh.h_x * mesh.h_y / 4.0


def _face_points(mesh, b, side):
    coords = mesh.node_coords(b)[mesh.face_local_nodes[side]]
    a, c = coords[:-1], coords[1:]
    xi = np.array([0.5 - _G, 0.5 + _G])
    pts = (a[:, None, :] + (c - a)[:, None, :] * xi[None, :, None]).reshape(-1, 2)
    length = np.linalg.norm(c - a, axis=1)
    return pts, np.repeat(0.5 * length, 2)


def _oracle_transport(mesh, blocks, v):
    nn, R = mesh.nodes_per_block, len(blocks)
    out = np.zeros((R * nn, R * nn))
    for r, b in enumerate(blocks):
        own = slice(r * nn, (r + 1) * nn)
        pts, w = _cell_points(mesh, b)
        phi, grad = _q1_basis(mesh, b, pts)
        out[own, own] -= w * (grad @ v) @ phi.T
        for side, normal in NORMALS.items():
            s = float(v @ normal)
            if abs(s) < TANGENT_TOL:
                continue
            fpts, fw = _face_points(mesh, b, side)
            test, _ = _q1_basis(mesh, b, fpts)
            if s > 0:
                out[own, own] += s * (test * fw) @ test.T
                continue
            nb = mesh.neighbor(b, side)
            if nb in blocks:
                trial, _ = _q1_basis(mesh, nb, fpts)
                c = blocks.index(nb)
                out[own, c * nn : (c + 1) * nn] += s * (test * fw) @ trial.T
    return out


def _oracle_mass(mesh, b, weight=None):
    pts, w = _cell_points(mesh, b)
    phi, _ = _q1_basis(mesh, b, pts)
    scale = np.full(len(pts), w) if weight is None else w * np.repeat(weight, 4)
    return (phi * scale) @ phi.T


@pytest.fixture
def two_blocks(ords4, media):
    mesh = build_nested_mesh(2, 1, 2)
    return DGAssembler(mesh, ords4, media, SMALL_EPSILON)


class TestAssemblerAgainstOracle:
    """Assembled matrices match direct quadrature of the weak forms."""

    # ===========================================
    # Block matrices
    # ===========================================

    def test_q1_mass(self, two_blocks):
        np.testing.assert_allclose(
            two_blocks.mass.toarray(), _oracle_mass(two_blocks.mesh, 0), atol=ORACLE_ATOL
        )

    def test_weighted_mass(self, two_blocks):
        mesh = two_blocks.mesh
        weight = 1.0 / (SMALL_EPSILON * cell_values(oscillatory_media(), mesh)[1])
        np.testing.assert_allclose(
            two_blocks.weighted_mass(1).toarray(), _oracle_mass(mesh, 1, weight), rtol=1e-12, atol=ORACLE_ATOL
        )

    @pytest.mark.parametrize("i", range(4))
    def test_transport_on_two_block_region(self, two_blocks, i):
        mesh, v = two_blocks.mesh, two_blocks.ords.directions[i]
        np.testing.assert_allclose(
            two_blocks.transport_ordinate((0, 1), i).toarray(),
            _oracle_transport(mesh, (0, 1), v),
            atol=ORACLE_ATOL,
        )

    @pytest.mark.parametrize("i", range(4))
    def test_transport_on_single_block_region(self, two_blocks, i):
        mesh, v = two_blocks.mesh, two_blocks.ords.directions[i]
        np.testing.assert_allclose(
            two_blocks.transport_ordinate((1,), i).toarray(),
            _oracle_transport(mesh, (1,), v),
            atol=ORACLE_ATOL,
        )

    def test_axis_aligned_ordinates(self):
        mesh = build_nested_mesh(2, 2, 2)
        asm = DGAssembler(mesh, build_ordinates(6))
        for i, v in enumerate(asm.ords.directions):
            np.testing.assert_allclose(
                asm.transport_ordinate((0, 1, 2, 3), i).toarray(),
                _oracle_transport(mesh, (0, 1, 2, 3), v),
                atol=ORACLE_ATOL,
            )

    # ===========================================
    # Full solve
    # ===========================================

    def test_fine_solution_on_single_block(self):
        mesh = build_nested_mesh(1, 1, 2)
        ords, media = build_ordinates(2), oscillatory_media()
        alpha, nn, g = ords.weights, mesh.nodes_per_block, boundary_data("cosine")
        mass = _oracle_mass(mesh, 0)
        msig = _oracle_mass(mesh, 0, 1.0 / (SMALL_EPSILON * cell_values(media, mesh)[0]))
        scatter = np.diag(alpha) - np.outer(alpha, alpha)
        op = np.kron(scatter, msig) + SMALL_EPSILON * np.kron(np.diag(alpha), mass)
        load = np.zeros(ords.m * nn)
        for i, v in enumerate(ords.directions):
            own = slice(i * nn, (i + 1) * nn)
            op[own, own] += alpha[i] * _oracle_transport(mesh, (0,), v)
            for side, normal in NORMALS.items():
                s = float(v @ normal)
                if s > -TANGENT_TOL:
                    continue
                pts, fw = _face_points(mesh, 0, side)
                test, _ = _q1_basis(mesh, 0, pts)
                load[own] += alpha[i] * -s * test @ (g(pts, v) * fw)
        expected = np.linalg.solve(op, load)
        u = solve_fine(mesh, ords, media, SMALL_EPSILON, "cosine")
        assert relative_difference(u.flat(), expected) < SOLVER_RTOL


class TestBilinearForms:
    """Identities of a, l and F."""

    def test_constant_field_on_single_block(self, ords4):
        mesh = build_nested_mesh(1, 1, 4)
        asm = DGAssembler(mesh, ords4)
        ones = np.ones(mesh.nodes_per_block)
        for i, v in enumerate(ords4.directions):
            value = ones @ (asm.transport_ordinate((0,), i) @ ones)
            assert value == pytest.approx(abs(v[0]) + abs(v[1]), rel=1e-12)

    def test_a_equals_jump_norm(self, assembler, rng):
        for _ in range(20):
            u = random_field(assembler, rng)
            a = bilinear_a(u, u, assembler.mesh, assembler.ords, assembler=assembler)
            v2 = float(u.flat() @ (assembler.jump() @ u.flat()))
            assert relative_difference(a, v2) < IDENTITY_RTOL

    def test_continuous_field_vanishing_on_boundary(self, assembler, rng):
        mesh = assembler.mesh
        coeff = rng.standard_normal(assembler.m)
        bump = np.stack(
            [np.sin(np.pi * xy[:, 0]) * np.sin(np.pi * xy[:, 1]) for xy in map(mesh.node_coords, range(mesh.n_blocks))]
        )
        u = KineticField(assembler.blocks(), coeff[:, None, None] * bump[None])
        assert bilinear_a(u, u, mesh, assembler.ords, assembler=assembler) == pytest.approx(0.0, abs=1e-13)

    def test_l_on_isotropic_field(self, assembler, rng):
        shape = (1, assembler.mesh.n_blocks, assembler.nn)
        u = KineticField(assembler.blocks(), np.repeat(rng.standard_normal(shape), assembler.m, axis=0))
        l = bilinear_l(u, u, assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, assembler=assembler)
        mass = float(u.flat() @ (assembler.ordinate_mass() @ u.flat()))
        assert relative_difference(l, SMALL_EPSILON * mass) < IDENTITY_RTOL

    def test_l_symmetric(self, assembler, rng):
        u, w = random_field(assembler, rng), random_field(assembler, rng)
        args = (assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON)
        assert bilinear_l(u, w, *args, assembler=assembler) == pytest.approx(
            bilinear_l(w, u, *args, assembler=assembler), rel=1e-12
        )

    def test_zero_inflow_functional(self, assembler, rng):
        w = random_field(assembler, rng)
        assert functional_F(w, "zero", assembler.mesh, assembler.ords, assembler=assembler) == 0.0

    @pytest.mark.parametrize("g, rtol", [("constant", 1e-12), ("cosine", 1e-3)])
    def test_inflow_perimeter_weight(self, ords4, g, rtol):
        mesh = build_nested_mesh(2, 2, 5)
        asm = DGAssembler(mesh, ords4)
        ones = KineticField(asm.blocks(), np.ones((asm.m, mesh.n_blocks, asm.nn)))
        expected = float(ords4.weights @ np.abs(ords4.directions).sum(axis=1))
        assert functional_F(ones, g, mesh, ords4, assembler=asm) == pytest.approx(expected, rel=rtol)

    @pytest.mark.parametrize("region", [(0, 1, 2, 3), (0,), (1, 3)])
    def test_nodal_inflow_matches_constant_data(self, assembler, region):
        load = sum(
            mat @ np.ones(len(gids)) for mat, gids in (assembler.inflow_matrix(region, i) for i in range(assembler.m))
        )
        np.testing.assert_allclose(load, assembler.inflow_load(region, "constant"), atol=ORACLE_ATOL)

    def test_layout_mismatch_rejected(self, assembler):
        u = KineticField.zeros((0, 1), assembler.m, assembler.nn)
        w = KineticField.zeros((0, 2), assembler.m, assembler.nn)
        with pytest.raises(InvalidArgumentError):
            bilinear_a(u, w, assembler.mesh, assembler.ords, assembler=assembler)


class TestNormMatrices:
    """Energy, trace, s- and jump matrices are symmetric positive semidefinite."""

    @pytest.mark.parametrize("name", ["energy", "trace", "s_matrix", "jump", "collision"])
    def test_symmetric_psd(self, assembler, name):
        matrix = getattr(assembler, name)((0, 1, 3)).toarray()
        np.testing.assert_allclose(matrix, matrix.T, atol=1e-12 * np.abs(matrix).max())
        assert min_eigenvalue_ratio(matrix) > -1e-12

    def test_scattering_part_vanishes_on_isotropic_fields(self, assembler, rng):
        shape = (1, assembler.mesh.n_blocks, assembler.nn)
        u = np.repeat(rng.standard_normal(shape), assembler.m, axis=0).reshape(-1)
        assert u @ (assembler.collision(absorption=False) @ u) == pytest.approx(0.0, abs=1e-9)

    def test_epsilon_must_be_positive(self, small_mesh, ords4, media):
        with pytest.raises(InvalidArgumentError):
            DGAssembler(small_mesh, ords4, media, 0.0)

    def test_collision_needs_media(self, small_mesh, ords4):
        with pytest.raises(InvalidArgumentError):
            DGAssembler(small_mesh, ords4).collision()


class TestSolveFine:
    """Reference fine solve."""

    def test_zero_inflow_gives_zero_solution(self, assembler):
        u = solve_fine(assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, "zero", assembler=assembler)
        assert not u.values.any()

    def test_residual(self, assembler):
        u = solve_fine(assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, "cosine", assembler=assembler)
        assert relative_residual(assembler.operator(), u.flat(), assembler.inflow_load(None, "cosine")) < SOLVER_RTOL
        assert u.values.shape == (assembler.m, assembler.mesh.n_blocks, assembler.nn)

    def test_builds_its_own_assembler(self, small_mesh, ords4, media, assembler):
        u = solve_fine(small_mesh, ords4, media, SMALL_EPSILON, "cosine")
        ref = solve_fine(small_mesh, ords4, media, SMALL_EPSILON, "cosine", assembler=assembler)
        np.testing.assert_allclose(u.values, ref.values, rtol=1e-12)

    def test_identity_basis_galerkin_reproduces_fine_solution(self, assembler):
        u = solve_fine(assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, "cosine", assembler=assembler)
        load = assembler.inflow_load(None, "cosine")
        sol = galerkin_solve(assembler.operator(), load, sp.identity(assembler.n_dofs()))
        assert relative_difference(sol.field, u.flat()) < SOLVER_RTOL

    def test_stability(self, assembler):
        u = solve_fine(assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, "cosine", assembler=assembler)
        scale = assembler.inflow_energy(None, "cosine")
        assert stability_margin(u, "cosine", assembler) >= -STABILITY_SLACK * scale

    @pytest.mark.parametrize("epsilon", [1e-1, 1e-2, 1e-3])
    @pytest.mark.parametrize("variant", ["oscillatory", "contrast"])
    def test_stability_across_epsilon(self, small_mesh, ords4, epsilon, variant):
        if variant == "contrast":
            media = default_contrast_field(small_mesh, 10.0, seed=0, power=2.0)
        else:
            media = oscillatory_media()
        asm = DGAssembler(small_mesh, ords4, media, epsilon)
        u = solve_fine(small_mesh, ords4, media, epsilon, "cosine", assembler=asm)
        assert stability_margin(u, "cosine", asm) >= -STABILITY_SLACK * asm.inflow_energy(None, "cosine")

    @pytest.mark.parametrize("layout", ["trigonometric", "quarter_offset"])
    def test_point_reflection_reverses_directions(self, small_mesh, layout):
        ords = build_ordinates(4, layout)
        media = default_contrast_field(small_mesh, 1.0, seed=0)
        u = solve_fine(small_mesh, ords, media, SMALL_EPSILON, "cosine").values
        centers = np.array([small_mesh.node_coords(b).mean(axis=0) for b in range(small_mesh.n_blocks)])
        local = small_mesh.node_coords(0) - np.array(small_mesh.block_origin(0))
        corner = np.array([small_mesh.H_x, small_mesh.H_y])
        perm_b = [int(np.argmin(np.linalg.norm(centers - (1.0 - c), axis=1))) for c in centers]
        perm_k = [int(np.argmin(np.linalg.norm(local - (corner - p), axis=1))) for p in local]
        perm_i = [int(np.argmin(np.linalg.norm(ords.directions + d, axis=1))) for d in ords.directions]
        np.testing.assert_allclose(u[perm_i][:, perm_b][:, :, perm_k], u, rtol=1e-10, atol=1e-14)

    def test_solution_tends_to_isotropic_as_epsilon_decreases(self, small_mesh, ords4, media):
        spread = [
            anisotropy(solve_fine(small_mesh, ords4, media, eps, "constant"), ords4.weights) for eps in (1.0, 5e-2)
        ]
        assert spread[1] < spread[0]

    def test_singular_factorization_reported(self):
        with pytest.raises(NumericalFailureError) as exc:
            factorize(sp.csr_matrix((3, 3)), stage="unit")
        assert exc.value.stage == "unit"

    def test_singular_galerkin_reported(self):
        with pytest.raises(NumericalFailureError):
            galerkin_solve(sp.csr_matrix((3, 3)), np.ones(3), np.eye(3))


class TestDumpSolution:
    """CSV dump of nodal values."""

    def test_header_and_rows(self, assembler, output_dir):
        u = solve_fine(assembler.mesh, assembler.ords, assembler.media, SMALL_EPSILON, "cosine", assembler=assembler)
        path = dump_solution(u, assembler.mesh, assembler.ords, output_dir / "u.csv")
        header, rows = read_csv(path)
        assert header == ["block", "node", "x", "y", "u_1", "u_2", "u_3", "u_4", "ubar"]
        assert len(rows) == assembler.mesh.n_blocks * assembler.nn
        first = [float(x) for x in rows[0][4:]]
        assert first[-1] == pytest.approx(np.mean(first[:-1]), rel=1e-12)
