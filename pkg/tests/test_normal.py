from dataclasses import replace
from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neckflow.errors import FoliationCollision
from neckflow.graph import CylinderGraph
from neckflow.normal import (CONDITIONS, GraphSampler, NormalityCertificate, build_normal_neck,
                             center_of_mass, certify_normal, check_foliation, cmc_foliate,
                             cmc_leaf, dirichlet_energy, harmonic_reparametrize,
                             leaf_geometry, leaf_mean_curvature, mobius, procrustes_residual,
                             procrustes_rotation, random_initial_map, recenter, slab_volumes,
                             sphere_volume_constant, vertex_areas, volume_coordinate,
                             _leaf_operators)
from neckflow.sphere_mesh import icosphere, random_rotation
from neckflow.synthetic import (harmonic_graph, perturbed_graph, rotational_graph,
                                twist_neck)


def test_sphere_volume_constant():
    assert sphere_volume_constant(3) == pytest.approx(4 * pi)
    assert sphere_volume_constant(2) == pytest.approx(2 * pi)


@given(st.floats(0.3, 3.0), st.floats(-0.3, 0.3))
def test_round_slices_of_a_cylinder_are_minimal(scale, value):
    mesh = icosphere(2)
    g = CylinderGraph(0.0, 1.0, mesh, np.linspace(0, 1, 5),
                      np.full((5, mesh.n_vertices), value * scale), scale)
    pos, U = leaf_geometry(g, GraphSampler(g), np.full(mesh.n_vertices, 0.5))
    H, _, A = leaf_mean_curvature(pos, U, mesh)
    assert np.abs(H).max() * scale < 1e-12
    assert np.allclose(np.abs(U[:, 3]), 1.0)
    assert A.sum() == pytest.approx(mesh.flat_face_areas.sum() * (scale * (1 + value)) ** 2,
                                    rel=1e-12)


def test_round_slices_of_a_cone_have_constant_curvature():
    g = rotational_graph(lambda z: 0.1 * z, n_heights=9, level=3)
    mesh = g.sphere_mesh
    pos, U = leaf_geometry(g, GraphSampler(g), np.full(mesh.n_vertices, 0.25))
    H, _, _ = leaf_mean_curvature(pos, U, mesh)
    assert np.ptp(H) < 1e-10 * np.abs(H).max()
    # a slice of a cone of slope 0.1 at radius rho: |H| = 2 * 0.1 / (rho sqrt(1.01))
    assert np.abs(H).mean() == pytest.approx(0.2 / (1.025 * sqrt(1.01)), rel=1e-10)


def test_vertex_areas_sum_to_flat_area():
    mesh = icosphere(2)
    assert vertex_areas(mesh.vertices, mesh.faces, mesh.n_vertices).sum() == pytest.approx(
        mesh.flat_face_areas.sum())


def test_sampler_reproduces_cubic_z_dependence():
    g = perturbed_graph(0.05, np.random.default_rng(1), level=2, n_heights=9)
    s = GraphSampler(g)
    z = np.full(g.sphere_mesh.n_vertices, 1.234)
    assert np.allclose(s.u(z), g.u_at(1.234), atol=1e-12)
    assert np.allclose(s.u(z, 1), g.u_at(1.234, 1), atol=1e-12)


def test_cmc_leaf_on_perturbed_graph():
    g = perturbed_graph(0.02, np.random.default_rng(2), level=3, n_heights=17)
    lf = cmc_leaf(g, 1.5, tol=1e-10)
    assert np.ptp(lf.H_values) * lf.mean_radius <= 1e-10
    assert abs(np.sum(g.sphere_mesh.vertex_weights * lf.phi)) < 1e-12
    assert lf.newton_steps >= 1


def test_cmc_leaves_of_rotational_graph_are_flat():
    g = rotational_graph(lambda z: 0.05 * np.sin(z), level=2)
    lf = cmc_leaf(g, 0.3)
    assert np.abs(lf.phi).max() < 1e-10


def test_foliation_collision_detected():
    g = harmonic_graph(1e-3, level=1, n_heights=5)
    leaves = cmc_foliate(g)
    check_foliation(leaves)
    check_foliation(leaves[::-1])
    with pytest.raises(FoliationCollision):
        check_foliation([leaves[1], leaves[1]])


@given(st.lists(st.floats(-0.5, 0.5), min_size=3, max_size=3))
def test_mobius_is_a_sphere_automorphism(a):
    a = np.asarray(a)
    x = icosphere(1).vertices
    y = mobius(a, x)
    assert np.allclose(np.linalg.norm(y, axis=1), 1.0)
    assert np.allclose(mobius(np.zeros(3), x), x)


@given(st.integers(0, 2 ** 32 - 1))
def test_recenter_zeroes_centre_of_mass(seed):
    mesh = icosphere(2)
    rng = np.random.default_rng(seed)
    A = mesh.vertex_weights
    G = mobius(rng.uniform(-0.3, 0.3, 3), mesh.vertices)
    assert np.linalg.norm(center_of_mass(recenter(G, A), A)) < 1e-12


@given(st.integers(0, 2 ** 32 - 1))
def test_procrustes_recovers_rotation(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3))
    R = random_rotation(rng)
    Rh, res = procrustes_residual(X, X @ R.T)
    assert np.allclose(Rh, R, atol=1e-10)
    assert res < 1e-10
    assert np.linalg.det(procrustes_rotation(X, -X)) == pytest.approx(1.0)


def test_harmonic_map_of_round_leaf_is_a_rotation():
    mesh = icosphere(3)
    pos = np.column_stack([1.7 * mesh.vertices, np.zeros(mesh.n_vertices)])
    rng = np.random.default_rng(4)
    G, info = harmonic_reparametrize(pos, mesh, random_initial_map(mesh, rng), tol=1e-10,
                                     return_info=True)
    R, res = procrustes_residual(mesh.vertices, G)
    assert res < 1e-8
    assert info.residual <= 1e-10
    assert np.all(np.diff(info.energies) <= 1e-12 * info.energies[0])


def test_harmonic_uniqueness_up_to_rotation(small_neck):
    mesh = small_neck.graph.sphere_mesh
    pos = small_neck.foliation[7].positions
    rng = np.random.default_rng(5)
    G1 = harmonic_reparametrize(pos, mesh, random_initial_map(mesh, rng))
    G2 = harmonic_reparametrize(pos, mesh, random_initial_map(mesh, rng))
    assert procrustes_residual(G1, G2)[1] < 1e-6
    L, A = _leaf_operators(pos, mesh)
    assert dirichlet_energy(G1, L) == pytest.approx(dirichlet_energy(G2, L), rel=1e-10)


def test_slab_volume_of_a_cone():
    # radius 1 + 0.1 z: each slab is 4 pi sqrt(1.01) int rho^2 dz
    g = rotational_graph(lambda z: 0.1 * z, a=0.0, b=1.0, n_heights=11, level=2)
    leaves = cmc_foliate(g)
    V = slab_volumes(g, leaves)
    z = g.heights
    exact = 4 * pi * sqrt(1.01) * np.diff((1 + 0.1 * z) ** 3 / 0.3)
    assert np.allclose(V, exact, rtol=1e-12)


@pytest.mark.parametrize("scale", [1.0, 2.5])
def test_volume_labels_of_exact_cylinder_are_heights(scale):
    mesh = icosphere(2)
    h = np.linspace(-1.0, 2.0, 7)
    g = CylinderGraph(-1.0, 2.0, mesh, h, np.zeros((7, mesh.n_vertices)), scale)
    labels = volume_coordinate(cmc_foliate(g), g)
    assert np.allclose(labels, h, atol=1e-12)


def test_built_neck_is_certified(small_neck):
    cert = certify_normal(small_neck)
    assert cert.passed, cert.residuals
    assert set(cert.residuals) == set(CONDITIONS)
    assert NormalityCertificate.from_dict(cert.to_dict()).residuals == cert.residuals


def test_volume_ablation_is_caught():
    g = rotational_graph(lambda z: 0.2 * z, a=0.0, b=1.0, n_heights=9, level=2)
    cert = certify_normal(build_normal_neck(g, skip_volume=True))
    assert cert.failing() == ["volume"]


def test_twist_breaks_killing_condition(small_neck):
    cert = certify_normal(twist_neck(small_neck, 0.2))
    assert not cert.flags["killing"]
    assert cert.flags["cmc"] and cert.flags["harmonic"] and cert.flags["com"]


def test_unaligned_rotation_breaks_nothing_but_killing(small_neck):
    R = random_rotation(np.random.default_rng(9))
    leaves = list(small_neck.foliation)
    leaves[-1] = replace(leaves[-1], G=np.asarray(leaves[-1].G) @ R.T)
    cert = certify_normal(replace(small_neck, foliation=leaves))
    assert cert.failing() == ["killing"]


def test_sphere_to_leaf_inverts_parametrization(small_neck):
    lf = small_neck.foliation[3]
    back = small_neck.sphere_to_leaf(3, np.asarray(lf.G)[:50])
    assert np.allclose(back, lf.positions[:50], atol=1e-10)


def test_labels_increase_and_neck_length(small_neck):
    z = np.asarray(small_neck.z_coordinate)
    assert np.all(np.diff(z) > 0)
    assert small_neck.length == pytest.approx(3.0, abs=1e-5)
