import numpy as np
import pytest

from beamplate import correctors, solver3d
from beamplate.correctors import (
    decomposition_residuals,
    extract_beam,
    extract_mean,
    extract_plate,
    extract_twist,
    extract_v3,
    extract_w_beam,
    layer_strain_norm,
    lift,
    profiles_csv,
    snap_layer_level,
)
from beamplate.limit_solver import LimitModel, make_limit_state
from beamplate.mesh import CrossSection, build_multidomain_mesh
from beamplate.scaling import ScalingParams
from beamplate.tensors import isotropic

OA = CrossSection(0.5, 0.5)
OB = CrossSection(1.0, 1.0)


@pytest.fixture(scope="module")
def mesh():
    return build_multidomain_mesh(
        OA, OB, beam_divisions=(4, 4, 8), plate_half_divisions=6,
        plate_nz=2, plate_grading=1.2,
    )


@pytest.fixture(scope="module")
def limit_model():
    A = isotropic(1.0, 1.0)
    return LimitModel(OA, OB, A, A, beam_levels=8, beam_xy=4,
                      plate_half=6, plate_grading=1.2, plate_levels=2)


class TestBeamExtraction:
    def test_zero_field(self, mesh):
        u = np.zeros((mesh.beam.n_nodes, 3))
        assert not extract_twist(u, mesh, 0.1).any()
        assert not extract_mean(u, mesh, 0.1).any()
        assert not extract_v3(u, mesh, 0.1).any()

    def test_pure_twist_recovered_exactly(self, mesh):
        r = 0.07
        z = mesh.beam.nodes[:, 2]
        cz = z * (1 - z)
        u = np.zeros((mesh.beam.n_nodes, 3))
        u[:, 0] = -r * cz * mesh.beam.nodes[:, 1]
        u[:, 1] = r * cz * mesh.beam.nodes[:, 0]
        c = extract_twist(u, mesh, r)
        levels = mesh.beam.z_lines
        assert np.allclose(c, levels * (1 - levels), atol=1e-13)
        # the same field has zero per-slice mean
        assert np.max(np.abs(extract_mean(u, mesh, r))) <= 1e-14

    def test_translation_has_no_twist(self, mesh):
        u = np.zeros((mesh.beam.n_nodes, 3))
        u[:, 0] = 0.3
        u[:, 1] = -0.7
        assert np.max(np.abs(extract_twist(u, mesh, 0.1))) <= 1e-13

    def test_mean_of_constant_translation(self, mesh):
        r = 0.2
        u = np.zeros((mesh.beam.n_nodes, 3))
        u[:, 0] = r * 0.4
        u[:, 1] = -r * 0.9
        d = extract_mean(u, mesh, r)
        assert np.allclose(d[:, 0], 0.4) and np.allclose(d[:, 1], -0.9)

    def test_v3_recovers_section_profile(self, mesh):
        # u3 = r * phi(x') with phi bilinear and of exact zero mean
        r = 0.11
        phi = mesh.beam.nodes[:, 0] * mesh.beam.nodes[:, 1]
        u = np.zeros((mesh.beam.n_nodes, 3))
        u[:, 2] = r * phi
        v3 = extract_v3(u, mesh, r)
        assert np.allclose(v3, phi, atol=1e-13)

    def test_v3_kills_slice_constant_fields(self, mesh):
        r = 0.11
        u = np.zeros((mesh.beam.n_nodes, 3))
        u[:, 2] = r * np.sin(mesh.beam.nodes[:, 2])
        assert np.max(np.abs(extract_v3(u, mesh, r))) <= 1e-13

    def test_w_removes_rigid_slice_motion(self, mesh):
        r = 0.09
        z = mesh.beam.nodes[:, 2]
        cz = np.cos(z)
        d1 = np.sin(z)
        u = np.zeros((mesh.beam.n_nodes, 3))
        u[:, 0] = r * (-cz * mesh.beam.nodes[:, 1] + d1)
        u[:, 1] = r * (cz * mesh.beam.nodes[:, 0])
        c = extract_twist(u, mesh, r)
        d = extract_mean(u, mesh, r)
        w = extract_w_beam(u, c, d, r, mesh)
        assert np.max(np.abs(w)) <= 1e-12

    def test_w_recovers_quadratic_corrector(self, mesh):
        # psi = (x1 x2, -x1 x2): zero slice mean and zero rotation moment
        r = 0.08
        x1 = mesh.beam.nodes[:, 0]
        x2 = mesh.beam.nodes[:, 1]
        u = np.zeros((mesh.beam.n_nodes, 3))
        u[:, 0] = r**2 * x1 * x2
        u[:, 1] = -(r**2) * x1 * x2
        c = extract_twist(u, mesh, r)
        d = extract_mean(u, mesh, r)
        w = extract_w_beam(u, c, d, r, mesh)
        assert np.allclose(w[:, 0], x1 * x2, atol=1e-12)
        assert np.allclose(w[:, 1], -x1 * x2, atol=1e-12)

    def test_decomposition_residuals_vanish(self, mesh, rng):
        u = rng.standard_normal((mesh.beam.n_nodes, 3))
        worst_mean, worst_rot = decomposition_residuals(u, mesh, 0.13)
        assert worst_mean <= 1e-10 and worst_rot <= 1e-10


class TestPlateExtraction:
    def test_zero_field(self, mesh):
        u = np.zeros((mesh.plate.n_nodes, 3))
        pc = extract_plate(u, mesh, 0.2)
        assert not pc.u_tilde.any() and not pc.v.any() and not pc.w3.any()

    def test_column_constant_vertical_field_gives_zero_w3(self, mesh):
        eps = 0.2
        u = np.zeros((mesh.plate.n_nodes, 3))
        g = np.cos(mesh.plate.nodes[:, 0]) * mesh.plate.nodes[:, 1]
        u[:, 2] = eps**2 * g
        pc = extract_plate(u, mesh, eps)
        assert np.max(np.abs(pc.w3)) <= 1e-12

    def test_shear_corrector_recovered(self, mesh):
        eps = 0.25
        x = mesh.plate.nodes
        prof = x[:, 2] + 0.5  # linear, zero mean over (-1, 0)
        v1 = np.cos(x[:, 0]) * prof
        v2 = np.sin(x[:, 1]) * prof
        u = np.zeros((mesh.plate.n_nodes, 3))
        u[:, 0] = eps * v1
        u[:, 1] = eps * v2
        pc = extract_plate(u, mesh, eps)
        assert np.allclose(pc.v[:, 0], v1, atol=1e-12)
        assert np.allclose(pc.v[:, 1], v2, atol=1e-12)
        assert np.max(np.abs(pc.u_tilde)) <= 1e-13

    def test_column_means_removed(self, mesh, rng):
        u = rng.standard_normal((mesh.plate.n_nodes, 3))
        pc = extract_plate(u, mesh, 0.3)
        plate = mesh.plate
        L = plate.nz + 1
        w = np.zeros(L)
        w[:-1] += 0.5 * np.diff(plate.z_lines)
        w[1:] += 0.5 * np.diff(plate.z_lines)
        v = pc.v.reshape(L, -1, 2)
        w3 = pc.w3.reshape(L, -1)
        assert np.max(np.abs(np.tensordot(w, v, axes=(0, 0)))) <= 1e-12
        assert np.max(np.abs(np.tensordot(w, w3, axes=(0, 0)))) <= 1e-12


def bilinear_plate_state(limit_model):
    """State whose plate fields are globally bilinear: the junction-map
    interpolation of the lifted traces is then exact."""
    fns = {
        "zeta_a": lambda z: 0.2 * (1 - z),
        "u_b_3": lambda x1, x2: 0.2 + 0.1 * x1 * x2,
        "u_b_3_x": lambda x1, x2: 0.1 * x2,
        "u_b_3_y": lambda x1, x2: 0.1 * x1,
        "u_b_3_xy": lambda x1, x2: np.full_like(x1, 0.1),
        "zeta_b_1": lambda x1, x2: 0.3 * x1 + 0.05 * x1 * x2,
        "zeta_b_2": lambda x1, x2: -0.1 * x2,
        "v_b_1": lambda x1, x2, z: (0.4 + 0.2 * x1) * (z + 0.5),
        "w_b_3": lambda x1, x2, z: (0.1 * x2) * (z + 0.5),
    }
    return make_limit_state(limit_model, fns, project_constraints=False)


class TestLift:
    def test_zero_state_lifts_to_zero(self, mesh, limit_model):
        st = make_limit_state(limit_model, {})
        p = ScalingParams(0.3, 0.3**1.5, 1.0, lam=1.0)
        u = lift(st, p, mesh)
        assert not u.u_a.any() and not u.u_b.any()

    def test_stretch_profile_above_layer(self, mesh, limit_model):
        st = make_limit_state(
            limit_model,
            {"zeta_a": lambda z: 1.0 - z,
             "u_b_3": lambda x1, x2: np.ones_like(x1)},
            project_constraints=False,
        )
        p = ScalingParams(0.3, 0.3**1.5, 1.0, lam=1.0)
        u = lift(st, p, mesh)
        layer = snap_layer_level(mesh, p.r)
        for lvl in range(layer, mesh.beam.nz + 1):
            ids = mesh.beam.level_node_ids(lvl)
            assert np.allclose(u.u_a[ids, 2], 1.0 - mesh.beam.z_lines[lvl])
        # bottom value comes from the plate trace
        ids0 = mesh.beam.level_node_ids(0)
        assert np.allclose(u.u_a[ids0, 2], 1.0, atol=1e-12)

    def test_ties_exact_for_bilinear_plate_data(self, mesh, limit_model):
        st = bilinear_plate_state(limit_model)
        p = ScalingParams(0.25, 0.25**1.5, 1.0, lam=1.0)
        u = lift(st, p, mesh)
        jm = mesh.build_junction_map(p.r)
        horiz, vert = solver3d.tie_residuals(u, mesh, jm, p)
        assert horiz <= 1e-14 and vert <= 1e-14

    def test_dirichlet_exact_for_top_vanishing_state(self, mesh, limit_model):
        hx2 = OA.hx**2 / 3.0
        fns = {
            "u_a_1": lambda z: z**3 * (1 - z) ** 2,
            "u_a_1_p": lambda z: 3 * z**2 * (1 - z) ** 2 - 2 * z**3 * (1 - z),
            "zeta_a": lambda z: 0.5 * (1 - z),
            "c": lambda z: z * (1 - z),
            "v_a_3": lambda x1, x2, z: (x1**2 - hx2) * z * (1 - z),
            "w_a_1": lambda x1, x2, z: (x2**2 - hx2) * z * (1 - z),
            "u_b_3": lambda x1, x2: 0.5 * (1 - x1**2) ** 2 * (1 - x2**2) ** 2,
            "u_b_3_x": lambda x1, x2: -2 * x1 * (1 - x1**2) * (1 - x2**2) ** 2,
            "u_b_3_y": lambda x1, x2: -2 * x2 * (1 - x1**2) ** 2 * (1 - x2**2),
            "u_b_3_xy": lambda x1, x2: 4 * x1 * x2 * (1 - x1**2) * (1 - x2**2),
            "zeta_b_1": lambda x1, x2: 0.2 * (1 - x1**2) * (1 - x2**2),
            "v_b_1": lambda x1, x2, z: np.cos(np.pi * x1 / 2)
            * np.cos(np.pi * x2 / 2) * (z + 0.5),
        }
        st = make_limit_state(limit_model, fns)
        p = ScalingParams(0.25, 0.25**1.5, 1.0, lam=1.0)
        u = lift(st, p, mesh)
        full = u.to_full()
        fixed = solver3d.dirichlet_dofs(mesh)
        assert np.max(np.abs(full[fixed])) <= 1e-12

    def test_layer_level_snapping_error(self, limit_model):
        coarse = build_multidomain_mesh(
            OA, OB, beam_divisions=(2, 2, 2), plate_half_divisions=4,
            plate_nz=1, plate_grading=1.0,
        )
        st = bilinear_plate_state(limit_model)
        p = ScalingParams(0.25, 0.1, 1.0, lam=1.0)  # r below first level 0.5
        with pytest.raises(ValueError):
            lift(st, p, coarse)

    def test_layer_strain_norm_positive(self, mesh, limit_model):
        st = bilinear_plate_state(limit_model)
        p = ScalingParams(0.3, 0.3**1.5, 1.0, lam=1.0)
        u = lift(st, p, mesh)
        assert layer_strain_norm(u, mesh, p) >= 0.0


class TestRoundTripSmoke:
    def test_extract_beam_bundles_fields(self, mesh, rng):
        u = rng.standard_normal((mesh.beam.n_nodes, 3))
        bc = extract_beam(u, mesh, 0.1)
        assert bc.c.shape == (mesh.beam.nz + 1,)
        assert bc.d.shape == (mesh.beam.nz + 1, 2)
        assert bc.v3.shape == (mesh.beam.n_nodes,)
        assert bc.w.shape == (mesh.beam.n_nodes, 2)


def test_profiles_csv_format():
    text = profiles_csv(np.array([0.0, 0.5]), {"c": np.array([1.0, 2.0])})
    lines = text.strip().split("\n")
    assert lines[0] == "x3,c"
    assert lines[1].startswith("0,") and lines[2].startswith("0.5,")
