from math import pi

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neckflow.errors import CapConvexityFailure, NeckTooShort, RadiusUnderflow
from neckflow.flow import (FlowConfig, SurgeryConfig, _cap_coefficients, _cyclic, _verify_cap,
                           adaptive_dt, cap_samples, enclosed_volume, perform_surgery,
                           profile_volume_removed, remesh, run_pipeline, run_until_event,
                           split_components, step, terminal_classify, two_convexity,
                           waist_radius)
from neckflow.detection import NeckCandidate, default_params
from neckflow.history import FlowHistory, FlowState, SurgeryRecord
from neckflow.profile import (curvature_field, cylinder_profile, function_profile,
                              sphere_profile, waist_profile)


@given(st.integers(5, 40), st.integers(0, 2 ** 32 - 1))
def test_cyclic_solver_matches_dense(m, seed):
    rng = np.random.default_rng(seed)
    lower, upper = rng.uniform(-1, 0, m), rng.uniform(-1, 0, m)
    diag = 3 + rng.uniform(0, 1, m)
    A = np.diag(diag) + np.diag(upper[:-1], 1) + np.diag(lower[1:], -1)
    A[0, -1], A[-1, 0] = lower[0], upper[-1]
    rhs = rng.normal(size=(m, 2))
    assert np.allclose(_cyclic(lower, diag, upper, rhs), np.linalg.solve(A, rhs), atol=1e-12)


@pytest.mark.parametrize("kw", [dict(cfl=0), dict(t_max=-1), dict(snapshot_capacity=1),
                                dict(check_interval=0)])
def test_flow_config_validation(kw):
    with pytest.raises(ValueError):
        FlowConfig(**kw)


def test_surgery_config_validation():
    with pytest.raises(ValueError):
        SurgeryConfig(cap_length=3.0, cut_half_width=2.0)


def test_cylinder_step_matches_ode_to_first_order():
    st = FlowState(cylinder_profile(1.0, 2 * pi, m=32))
    dt = 1e-3
    nxt = step(st, dt)
    # explicit reaction term: r1 = r0 - (n-1) dt / r0
    assert np.allclose(nxt.profile.radius, 1.0 - 2 * dt)
    assert np.allclose(nxt.profile.axis_samples, st.profile.axis_samples)
    assert nxt.time == dt and nxt.step_count == 1


@given(st.floats(0.5, 3.0))
def test_flow_is_parabolically_scale_invariant(c):
    prof = waist_profile(m=129)
    a = step(FlowState(prof), 1e-3)
    b = step(FlowState(prof.scaled(c)), 1e-3 * c * c)
    assert np.allclose(b.profile.radius, c * a.profile.radius, rtol=1e-10, atol=1e-12)
    assert np.allclose(b.profile.axis_samples, c * a.profile.axis_samples, rtol=1e-10,
                       atol=1e-12)


def test_adaptive_dt_follows_grid_and_curvature():
    coarse = adaptive_dt(FlowState(cylinder_profile(1.0, 2 * pi, m=64)))
    fine = adaptive_dt(FlowState(cylinder_profile(1.0, 2 * pi, m=128)))
    assert coarse / fine == pytest.approx(4.0)
    thin = adaptive_dt(FlowState(cylinder_profile(1e-3, 2 * pi, m=64)))
    assert thin == pytest.approx(0.2 * 1e-6 / 2)


def test_remesh_keeps_the_shape():
    prof = sphere_profile(1.0, m=300)
    new = remesh(prof, 400)
    assert new.m == 400 and new.ends == prof.ends
    d = np.hypot(new.axis_samples, new.radius)
    assert np.allclose(d, 1.0, atol=1e-6)
    seg = np.hypot(np.diff(new.axis_samples), np.diff(new.radius))
    assert seg.max() / seg.min() < 1.01


def test_underflow_floor():
    prof = function_profile(lambda x: 0.3 + 0.7 * np.abs(np.sin(x / 2)), -pi, pi, m=128,
                            ends=("periodic", "periodic"))
    with pytest.raises(RadiusUnderflow) as info:
        step(FlowState(prof), 1e-4, radius_floor=0.5)
    assert info.value.state is not None


def test_waist_radius():
    assert waist_radius(sphere_profile(2.0)) == pytest.approx(2.0, rel=1e-4)
    assert waist_radius(waist_profile(amplitude=0.1)) == pytest.approx(0.9)


def test_cap_polynomial_conditions():
    r0, r1, r2, ell = 0.5, -0.02, 0.1, 0.5
    coef = _cap_coefficients(r0, r1, r2, ell)
    p = np.polynomial.Polynomial(coef)
    assert p(0) == pytest.approx(r0 ** 2)
    assert p.deriv()(0) == pytest.approx(2 * r0 * r1)
    assert p.deriv(2)(0) == pytest.approx(2 * (r1 ** 2 + r0 * r2))
    assert p(ell) == pytest.approx(0.0, abs=1e-14)
    assert p.deriv()(ell) == pytest.approx(-2 * r0)
    s, r = cap_samples(coef, ell, 20)
    assert r[-1] == 0.0 and s[-1] == pytest.approx(ell)
    _verify_cap(coef, ell)


def test_bad_cap_is_rejected():
    with pytest.raises(CapConvexityFailure):
        _verify_cap(_cap_coefficients(0.5, 0.5, 5.0, 0.5), 0.5)


def test_surgery_on_detected_dumbbell(dumbbell_detection):
    ev, _, params = dumbbell_detection
    cand = max(ev.candidates, key=lambda c: c.H)
    new, rec = perform_surgery(ev.state, cand, SurgeryConfig(), params.epsilon)
    parts = split_components(new)
    assert len(parts) == 2
    assert all(p.profile.ends == ("capped", "capped") for p in parts)
    for p in parts:
        assert np.all(np.nan_to_num(two_convexity(p.profile), nan=0.0) >= -1e-9)
    lo, hi = rec.region
    assert lo < cand.x < hi
    # samples outside the removed interval and the cap zones are untouched
    old = ev.state.profile
    keep = old.axis_samples < lo - rec.cap_params["caps"][0]["length"]
    assert np.array_equal(new.profile.axis_samples[:keep.sum()], old.axis_samples[keep])
    assert np.array_equal(new.profile.radius[:keep.sum()], old.radius[keep])
    # the surgery removes volume, never adds it
    assert enclosed_volume(new.profile) < enclosed_volume(old)
    assert profile_volume_removed(old, rec) > 0


def test_short_neck_is_refused(dumbbell_detection):
    ev, _, params = dumbbell_detection
    cand = max(ev.candidates, key=lambda c: c.H)
    with pytest.raises(NeckTooShort):
        perform_surgery(ev.state, cand, SurgeryConfig(min_neck_length=500.0), params.epsilon)


def test_periodic_surgery_gives_one_capped_piece():
    prof = function_profile(lambda x: 1 - 0.02 * np.cos(2 * pi * x / 40), 0.0, 40.0, m=800,
                            ends=("periodic", "periodic"))
    st = FlowState(prof)
    p = 0
    H = st.curvatures[2]
    cand = NeckCandidate(p, float(prof.axis_samples[p]), float(H[p]), 2 / float(H[p]))
    new, _ = perform_surgery(st, cand, SurgeryConfig(), 0.2)
    assert new.profile.ends == ("capped", "capped")
    assert len(split_components(new)) == 1


def test_split_components_ignores_tiny_pieces():
    assert len(split_components(FlowState(sphere_profile()))) == 1


def test_sphere_run_until_extinction():
    prof = sphere_profile(1.0, m=256)
    hist = FlowHistory()
    ev = run_until_event(FlowState(prof), hist, default_params(prof))
    assert ev.kind == "Extinction"
    assert ev.extinction_time == pytest.approx(1 / 6, rel=1e-3)
    assert terminal_classify(ev.state, hist) == "Sphere"
    assert len(hist.snapshots) > 2
    assert np.all(np.diff(hist.times) > 0)


def test_time_limit_event():
    prof = sphere_profile(1.0, m=128)
    ev = run_until_event(FlowState(prof), FlowHistory(), default_params(prof),
                         FlowConfig(t_max=0.01))
    assert ev.kind == "TimeLimit"
    assert ev.time == pytest.approx(0.01)


def test_pipeline_on_sphere():
    prof = sphere_profile(1.0, m=128)
    res = run_pipeline(prof, default_params(prof))
    assert [e.kind for e in res.events] == ["Extinction"]
    assert [c.label for c in res.components] == ["Sphere"]
    t = [row[0] for row in res.series]
    assert np.all(np.diff(t) > 0)


def test_history_ring_buffer():
    hist = FlowHistory(capacity=3)
    prof = sphere_profile(m=32)
    for t in range(5):
        hist.append(FlowState(prof, float(t)))
    assert list(hist.times) == [2.0, 3.0, 4.0]
    with pytest.raises(ValueError):
        hist.append(FlowState(prof, 1.0))
    assert len(hist.in_window(2.5, 4.0)) == 2
    cp = hist.copy()
    cp.record_surgery(SurgeryRecord(4.0, (0.0, 1.0), {}))
    assert hist.surgeries == []


def test_surgery_record_validation():
    with pytest.raises(ValueError):
        SurgeryRecord(0.0, (1.0, 1.0), {})
    rec = SurgeryRecord(0.0, (0.0, 1.0), {})
    assert rec.overlaps(0.5, 2.0) and not rec.overlaps(1.5, 2.0)


def test_flowstate_caches_curvatures():
    st = FlowState(cylinder_profile(m=32))
    assert st.curvatures is st.curvatures
    lam_a, lam_r, H, grad = st.curvature_derivatives(2)
    assert grad.shape == (2, 32)
    assert np.allclose(H, curvature_field(st.profile)[2])
