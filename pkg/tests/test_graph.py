import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neckflow.detection import NeckParams, is_hypersurface_neck
from neckflow.errors import HeightOutOfRange, WindowExceedsDomain
from neckflow.graph import (CylinderGraph, conformal_deviation, extract_graph,
                            graph_ck_norm, graph_cross_section, graph_weingarten, mean_radii,
                            mean_radius)
from neckflow.profile import cylinder_profile, waist_profile
from neckflow.sphere_mesh import icosphere
from neckflow.synthetic import cone_graph, harmonic_graph, rotational_graph


def flat_graph(level=2, n_heights=9, value=0.0, scale=1.0):
    mesh = icosphere(level)
    return CylinderGraph(0.0, 1.0, mesh, np.linspace(0, 1, n_heights),
                         np.full((n_heights, mesh.n_vertices), value), scale)


@pytest.mark.parametrize("kwargs", [
    dict(a=1.0, b=0.0),
    dict(heights=np.array([0.0, 0.5, 0.4])),
    dict(u=np.zeros((3, 5))),
    dict(scale=0.0),
    dict(n=4),
    dict(u=np.full((3, 42), np.nan)),
])
def test_graph_validation(kwargs):
    mesh = icosphere(1)
    args = dict(a=0.0, b=1.0, sphere_mesh=mesh, heights=np.array([0.0, 0.5, 1.0]),
                u=np.zeros((3, mesh.n_vertices)))
    args.update(kwargs)
    with pytest.raises(ValueError):
        CylinderGraph(**args)


@given(st.floats(-0.4, 0.4), st.floats(0.1, 10.0))
def test_round_sections_have_exact_mean_radius(value, scale):
    g = flat_graph(value=value * scale, scale=scale)
    sec = graph_cross_section(g, 0.5)
    assert mean_radius(sec) == pytest.approx(scale * (1 + value), rel=1e-12)


def test_cross_section_height_range():
    g = flat_graph()
    with pytest.raises(HeightOutOfRange):
        graph_cross_section(g, 1.5)


def test_exact_cylinder_geometry():
    g = flat_graph(level=3, value=0.0, scale=2.0)
    eig, dn, _ = graph_weingarten(g, k=2)
    assert np.allclose(eig[..., 0], 0.0, atol=1e-12)
    assert np.allclose(eig[..., 1:], 0.5, atol=1e-12)
    assert np.abs(dn).max() < 1e-10
    assert max(max(a, b) for a, b in conformal_deviation(g, 1)) < 1e-10
    cert = is_hypersurface_neck(g, NeckParams(epsilon=1e-6, k=2))
    assert cert.passed
    assert max(cert.residuals[k] for k in ("conformal", "cylindrical", "parallel",
                                            "log_radius")) < 1e-8


def test_rotational_graph_curvatures():
    # radius (1 + 0.1 z) over z in [-1, 1]: a cone with slope 0.1
    g = rotational_graph(lambda z: 0.1 * z, n_heights=33, level=3)
    eig, _, _ = graph_weingarten(g)
    rho = 1 + 0.1 * g.heights
    expected_round = 1.0 / (rho * np.sqrt(1 + 0.01))
    assert np.allclose(eig[:, :, 0], 0.0, atol=1e-10)
    assert np.allclose(eig[:, :, 1], expected_round[:, None], rtol=1e-10)


def test_cone_fails_log_radius():
    cert = is_hypersurface_neck(cone_graph(rate=0.5), NeckParams(epsilon=0.1, k=1))
    assert not cert.flags["log_radius"]
    assert cert.residuals["log_radius"] == pytest.approx(0.5, rel=1e-2)


def test_harmonic_graph_radii_close_to_scale():
    g = harmonic_graph(1e-2, level=3, n_heights=5)
    r = mean_radii(g)
    assert np.allclose(r, r[0])
    assert abs(r[0] - 1) < 1e-4


def test_ck_norm_of_flat_graph():
    assert graph_ck_norm(flat_graph(value=0.1), 2) == pytest.approx(0.1)


def test_extract_graph_from_cylinder():
    g = extract_graph(cylinder_profile(2.0, 20.0, m=400), 200, L=2.0, level=2)
    assert g.scale == 1.0
    assert np.abs(g.u).max() < 1e-10
    assert g.heights[0] == -2.0 and g.heights[-1] == 2.0


def test_extract_graph_window_checks():
    prof = waist_profile()
    with pytest.raises(WindowExceedsDomain):
        extract_graph(prof, 3, L=2.0, level=1)


def test_scaled_graph_is_similar():
    g = harmonic_graph(1e-2, level=2, n_heights=9)
    eig, _, _ = graph_weingarten(g)
    eig2, _, _ = graph_weingarten(g.scaled(3.0))
    assert np.allclose(eig2 * 3.0, eig, atol=1e-12)
