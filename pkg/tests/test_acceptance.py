"""End-to-end acceptance checks; each test prints one PASS/FAIL summary line."""

import time
from math import pi

import numpy as np

from neckflow.algebra import (CylinderIsometry, classify_gluing, extend_maximal_profile,
                              fit_isometry, merge_necks, reparametrize)
from neckflow.detection import (NeckParams, backward_parabolic_neighborhood, default_params,
                                detect_neck_points, is_curvature_neck, is_eps_cylindrical,
                                is_eps_k_parallel, is_hypersurface_neck, scan_neck_points,
                                shrinking_neck_certificate)
from neckflow.flow import FlowConfig, adaptive_dt, run_pipeline, run_until_event, step
from neckflow.graph import CylinderGraph
from neckflow.history import FlowHistory, FlowState, SurgeryRecord
from neckflow.normal import (build_normal_neck, certify_normal, harmonic_reparametrize,
                             procrustes_residual, random_initial_map, slab_volumes,
                             sphere_volume_constant)
from neckflow.profile import (cylinder_profile, dumbbell_profile, function_profile,
                              profile_curvature, sphere_profile, waist_profile)
from neckflow.sphere_mesh import axis_rotation, random_rotation, rotation_angle
from neckflow.synthetic import harmonic_graph, perturbed_graph

N = 3


def shrinking_radius(r0, t, n=N):
    return np.sqrt(r0 ** 2 - 2 * (n - 1) * t)


# ---- 1. shrinking cylinder -----------------------------------------------------------

def test_c01_shrinking_cylinder(verdict):
    r0 = 1.0
    T = 0.9 * r0 ** 2 / (2 * (N - 1))
    state = FlowState(cylinder_profile(r0, 2 * pi, m=512, n=N))
    worst = 0.0
    t0 = time.perf_counter()
    while state.time < T:
        dt = min(adaptive_dt(state), T - state.time)
        state = step(state, dt)
        exact = shrinking_radius(r0, state.time)
        worst = max(worst, float(np.max(np.abs(state.profile.radius / exact - 1))))
    wall = time.perf_counter() - t0
    verdict(1, worst < 1e-3 and wall < 10,
            f"max rel error {worst:.2e} (< 1e-3), {state.step_count} steps in {wall:.2f}s (< 10s)")


# ---- 2. shrinking sphere -------------------------------------------------------------

def test_c02_shrinking_sphere(verdict):
    R = 1.0
    prof = sphere_profile(R, m=512, n=N)
    shape = []

    def roundness(st):
        x, r = st.profile.axis_samples, st.profile.radius
        xc = 0.5 * (x[0] + x[-1])
        d = np.hypot(x - xc, r)
        shape.append(float(np.max(np.abs(d / d.mean() - 1))))

    ev = run_until_event(FlowState(prof), FlowHistory(), default_params(prof),
                         FlowConfig(t_max=1.0), on_step=roundness)
    t_exact = R ** 2 / (2 * N)
    rel = abs(ev.extinction_time / t_exact - 1)
    dev = max(shape)
    verdict(2, ev.kind == "Extinction" and rel < 0.01 and dev < 1e-3,
            f"{ev.kind} at {ev.extinction_time:.5f} vs {t_exact:.5f} (rel {rel:.2e} < 1e-2), "
            f"shape deviation {dev:.2e} (< 1e-3)")


# ---- 3. dumbbell pipeline ------------------------------------------------------------

def _dumbbell_run(m):
    prof = dumbbell_profile(m=m)
    res = run_pipeline(prof, default_params(prof))
    return res, [e.kind for e in res.events]


def test_c03_dumbbell_pipeline(verdict):
    res, kinds = _dumbbell_run(200)
    fine, fine_kinds = _dumbbell_run(400)
    labels = sorted(c.label for c in res.components)
    first_neck = kinds.index("NeckDetected") if "NeckDetected" in kinds else len(kinds)
    underflow = kinds.index("RadiusUnderflow") if "RadiusUnderflow" in kinds else len(kinds) + 1
    ok = (first_neck < underflow and len(res.surgeries) == 1 and len(res.components) == 2
          and labels == ["Sphere", "Sphere"] and fine_kinds == kinds
          and len(fine.surgeries) == 1 and sorted(c.label for c in fine.components) == labels)
    verdict(3, ok, f"events {kinds}, surgeries {len(res.surgeries)}, components {labels}; "
                   f"refined events {fine_kinds}")


# ---- 4. detection predicates ---------------------------------------------------------

def _history_scaled(hist, c):
    out = FlowHistory(hist.capacity)
    for s in hist.snapshots:
        out.append(FlowState(s.profile.scaled(c), s.time * c * c, s.step_count))
    return out


def test_c04_detection_predicates(verdict):
    cyl = cylinder_profile(1.0, 2 * pi, m=512, n=N)
    worst_cyl, all_pass = 0.0, True
    for k in (1, 2, 3):
        for L in (1.0, 2.0, 3.0, 4.0):
            for eps in (1e-6, 1e-2):
                for p in (0, 100, 511):
                    cert = is_curvature_neck(cyl, p, NeckParams(epsilon=eps, k=k, L=L))
                    all_pass &= cert.passed
                    worst_cyl = max(worst_cyl, *cert.residuals.values())

    sph = sphere_profile(1.0, m=4096, n=N)
    w = profile_curvature(sph, 2048, k=1)
    sphere_ok, sphere_res = is_eps_cylindrical(w, 1e-2)

    # scale invariance on a waisted profile, a graph and a flow history
    wp = waist_profile()
    p = int(np.argmin(wp.radius[100:-100])) + 100
    params = NeckParams(epsilon=0.5, k=2, L=1.5)
    graph = perturbed_graph(0.02, np.random.default_rng(3), level=2, n_heights=17)
    hist = FlowHistory()
    st = FlowState(cylinder_profile(1.0, 2 * pi, m=128, n=N))
    hist.append(st)
    for _ in range(40):
        st = step(st, 2e-3)
        hist.append(st)
    nb = backward_parabolic_neighborhood(hist, 5, st.time, NeckParams(theta=0.05))

    def signature(c):
        prof, g, h = wp.scaled(c), graph.scaled(c), _history_scaled(hist, c)
        wd = profile_curvature(prof, p, k=2)
        nbc = backward_parabolic_neighborhood(h, 5, h.last.time, NeckParams(theta=0.05))
        return np.array([
            is_eps_cylindrical(wd, 0.5)[1],
            float(is_eps_k_parallel(wd, 0.5, 2)),
            *is_curvature_neck(prof, p, params).residuals.values(),
            *is_hypersurface_neck(g, params).residuals.values(),
            *shrinking_neck_certificate(h, nbc, NeckParams(theta=0.05)).residuals.values(),
            len(nbc.snapshot_refs), len(nbc.spatial_indices),
        ])

    base = signature(1.0)
    drift = max(float(np.max(np.abs(signature(c) - base) / np.maximum(np.abs(base), 1e-12)))
                for c in (0.5, 2.0))
    ok = (all_pass and worst_cyl < 1e-8 and not sphere_ok and abs(sphere_res - 2 / 3) < 1e-6
          and drift < 1e-8 and len(nb.snapshot_refs) > 1)
    verdict(4, ok, f"cylinder residual {worst_cyl:.1e} (< 1e-8); sphere residual "
                   f"{sphere_res:.8f} (2/3 +- 1e-6); rescaling drift {drift:.1e}")


# ---- 5. normal neck construction -----------------------------------------------------

def test_c05_normal_neck(verdict):
    graph = harmonic_graph(1e-3, level=4, n_heights=33)
    t0 = time.perf_counter()
    neck = build_normal_neck(graph)
    cert = certify_normal(neck)
    wall = time.perf_counter() - t0

    rng = np.random.default_rng(7)
    mesh = graph.sphere_mesh
    procrustes = 0.0
    for k in (0, 16, 32):
        pos = neck.foliation[k].positions
        G1 = harmonic_reparametrize(pos, mesh, random_initial_map(mesh, rng))
        G2 = harmonic_reparametrize(pos, mesh, random_initial_map(mesh, rng))
        procrustes = max(procrustes, procrustes_residual(G1, G2)[1])

    # volume identity against a finer quadrature
    V = np.concatenate([[0.0], np.cumsum(slab_volumes(graph, neck.foliation, nodes=32))])
    r = np.array([lf.mean_radius for lf in neck.foliation])
    z = np.asarray(neck.z_coordinate)
    model = np.concatenate([[0.0], np.cumsum(
        sphere_volume_constant(N) * 0.5 * (r[:-1] ** N + r[1:] ** N) * np.diff(z))])
    vol = 0.0
    for _ in range(5):
        v, w = sorted(rng.choice(len(z), 2, replace=False))
        vol = max(vol, abs((V[w] - V[v]) - (model[w] - model[v])) / (V[w] - V[v]))

    worst = max(cert.residuals.values())
    ok = worst < 1e-6 and procrustes < 1e-6 and vol < 1e-8 and wall < 60
    verdict(5, ok, f"max residual {worst:.1e} (< 1e-6), Procrustes {procrustes:.1e} (< 1e-6), "
                   f"volume identity {vol:.1e} (< 1e-8), build+certify {wall:.1f}s (< 60s)")


# ---- 6. isometry recovery ------------------------------------------------------------

def test_c06_fit_isometry(verdict, small_neck):
    R0 = random_rotation(np.random.default_rng(11))
    errs = []
    for flip in (False, True):
        F = CylinderIsometry(R0, 0.7, flip)
        Fh, _ = fit_isometry(small_neck, reparametrize(small_neck, F))
        errs.append(max(float(np.max(np.abs(Fh.rotation - R0))), abs(Fh.z_shift - 0.7),
                        0.0 if Fh.z_flip == flip else np.inf))
    verdict(6, max(errs) < 1e-8, f"componentwise error {errs[0]:.1e} / flipped {errs[1]:.1e} "
                                 f"(< 1e-8)")


# ---- 7. merge round trip -------------------------------------------------------------

def test_c07_merge_round_trip(verdict):
    full = harmonic_graph(1e-3, level=3, n_heights=51, a=0.0, b=5.0)
    h, u, mesh = full.heights, full.u, full.sphere_mesh
    left = CylinderGraph(0.0, 3.0, mesh, h[:31], u[:31])
    right = CylinderGraph(2.0, 5.0, mesh, h[20:], u[20:])
    n1, n2 = build_normal_neck(left), build_normal_neck(right)
    merged, F1, F2 = merge_necks(n1, n2, delta=0.5)
    eye = CylinderIsometry.identity()
    trans = max(F1.distance(CylinderIsometry(np.eye(3), F1.z_shift)),
                F2.distance(CylinderIsometry(np.eye(3), F2.z_shift)))
    ok = abs(merged.length - 5.0) < 1e-6 and trans < 1e-8 and F1.distance(eye) < 1e-8
    verdict(7, ok, f"merged length {merged.length:.9f} (5 +- 1e-6), rotation parts within "
                   f"{trans:.1e} of identity, F2 shift {F2.z_shift:.3e}")


# ---- 8. periodic classification ------------------------------------------------------

def test_c08_periodic_classification(verdict):
    prof = function_profile(lambda x: 1 + 0.01 * np.cos(x), 0.0, 2 * pi, m=256,
                            ends=("periodic", "periodic"))
    plain = extend_maximal_profile(prof)
    twisted = extend_maximal_profile(prof, twist=axis_rotation([0.0, 0.0, 1.0], 0.3))
    mirror = extend_maximal_profile(prof, twist=np.diag([1.0, 1.0, -1.0]))
    kinds = [r.kind for r in (plain, twisted, mirror)]
    period_err = max(abs(r.period - 2 * pi) for r in (plain, twisted, mirror)
                     if r.kind == "Periodic") if "Periodic" in kinds else np.inf
    angle_err = abs(rotation_angle(twisted.deck_isometry.rotation) - 0.3) \
        if twisted.kind == "Periodic" else np.inf
    labels = [classify_gluing(r) for r in (plain, mirror)] if kinds.count("Periodic") == 3 \
        else []
    ok = (kinds == ["Periodic"] * 3 and period_err < 1e-6 and angle_err < 1e-6
          and labels == ["TubeS1", "TwistedQuotient"])
    verdict(8, ok, f"{kinds}, period error {period_err:.1e}, twist error {angle_err:.1e}, "
                   f"labels {labels}")


# ---- 9. surgery exclusion ------------------------------------------------------------

def test_c09_surgery_exclusion(verdict, dumbbell_detection):
    ev, hist, params = dumbbell_detection
    state = ev.state
    cands, _ = scan_neck_points(state, hist, params, certify=False)
    removed = 0
    for c in cands:
        nb = backward_parabolic_neighborhood(hist, c.index, state.time, params, state=state)
        h2 = hist.copy()
        t_mid = 0.5 * (nb.time_window[0] + nb.time_window[1])
        h2.record_surgery(SurgeryRecord(t_mid, (c.x - 0.1 * c.rhat, c.x + 0.1 * c.rhat), {}))
        kept = detect_neck_points(state, h2, params, certify=False)
        removed += all(k.index != c.index for k in kept)
    verdict(9, len(cands) > 0 and removed == len(cands),
            f"{removed}/{len(cands)} candidates removed by a surgery in their window")


# ---- 10. convergence orders ----------------------------------------------------------

def _flow_fixed(prof, dt, T):
    st = FlowState(prof)
    for _ in range(int(round(T / dt))):
        st = step(st, dt)
    return st


def test_c10_convergence_orders(verdict):
    T = 0.2
    errs = []
    for dt in (4e-3, 2e-3, 1e-3, 5e-4):
        st = _flow_fixed(cylinder_profile(1.0, 2 * pi, m=64, n=N), dt, T)
        errs.append(float(np.max(np.abs(st.profile.radius - shrinking_radius(1.0, T)))))
    time_orders = np.log2(np.array(errs[:-1]) / errs[1:])

    # the exact cylinder carries no spatial error; a slightly waisted one does
    def amplitude(m):
        prof = function_profile(lambda x: 1 + 0.1 * np.cos(x), 0.0, 2 * pi, m=m,
                                ends=("periodic", "periodic"))
        r = _flow_fixed(prof, 1e-4, 0.1).profile.radius
        return r.max() - r.min()

    amps = np.array([amplitude(m) for m in (16, 32, 64, 128)])
    diffs = np.abs(np.diff(amps))
    space_orders = np.log2(diffs[:-1] / diffs[1:])
    ok = (np.all((time_orders >= 0.8) & (time_orders <= 1.2))
          and np.all((space_orders >= 1.7) & (space_orders <= 2.3)))
    verdict(10, ok, f"time orders {np.round(time_orders, 3).tolist()} in [0.8, 1.2], "
                    f"space orders {np.round(space_orders, 3).tolist()} in [1.7, 2.3]")
