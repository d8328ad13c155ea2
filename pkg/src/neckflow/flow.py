"""Rotationally symmetric mean curvature flow with neck surgery.

The profile is evolved as a planar curve gamma(u) = (x(u), r(u)):

    gamma_t = gamma_uu / |gamma_u|^2 - (n - 1) (nu_r / r) nu,

which moves every point with normal speed -H (the tangential part only
reparametrizes).  The second-derivative term is implicit with the metric
factor lagged, the rotational term is explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .detection import NeckCandidate, NeckCertificate, NeckParams, detect_neck_points
from .errors import CapConvexityFailure, NeckTooShort, RadiusUnderflow
from .history import FlowHistory, FlowState, SurgeryRecord
from .profile import RadialProfile, _padded, curvature_field, unit_ball_volume


@dataclass(frozen=True)
class FlowConfig:
    cfl: float = 0.2
    t_max: float = 1.0
    snapshot_capacity: int = 256
    snapshot_spacing: float = 0.02
    check_interval: int = 20
    extinction_fraction: float = 0.1
    radius_floor: float = 1e-3
    curvature_ceiling: float = 1e4
    remesh_ratio: float = 3.0
    max_steps: int = 2_000_000

    def __post_init__(self):
        for name in ("cfl", "t_max", "snapshot_spacing", "extinction_fraction", "radius_floor",
                     "curvature_ceiling", "remesh_ratio"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.snapshot_capacity < 2 or self.check_interval < 1:
            raise ValueError("snapshot_capacity >= 2 and check_interval >= 1 required")


@dataclass(frozen=True)
class SurgeryConfig:
    min_neck_length: float = 6.0
    cap_length: float = 1.0
    cut_half_width: float = 2.0

    def __post_init__(self):
        if not (self.min_neck_length > 0 and self.cap_length > 0 and self.cut_half_width > 0):
            raise ValueError("surgery parameters must be positive")
        if self.cap_length >= self.cut_half_width:
            raise ValueError("cap_length must be shorter than cut_half_width")


@dataclass
class Event:
    kind: str
    time: float
    state: FlowState
    candidates: list = field(default_factory=list)
    extinction_time: float | None = None
    detail: str = ""


# ---- time step -----------------------------------------------------------------

def _tridiag(lower, diag, upper, rhs):
    ab = np.zeros((3, len(diag)))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _cyclic(lower, diag, upper, rhs):
    """Solve a cyclic tridiagonal system (Sherman-Morrison).

    Row i reads lower[i] y[i-1] + diag[i] y[i] + upper[i] y[i+1], indices mod m.
    """
    m = len(diag)
    alpha, beta = upper[-1], lower[0]  # A[m-1, 0], A[0, m-1]
    gam = -diag[0]
    d = diag.copy()
    d[0] -= gam
    d[-1] -= alpha * beta / gam
    uvec = np.zeros(m)
    uvec[0], uvec[-1] = gam, alpha
    rhs = np.asarray(rhs)
    cols = rhs.reshape(m, -1)
    both = _tridiag(lower, d, upper, np.column_stack([cols, uvec]))
    y, z = both[:, :-1], both[:, -1:]
    fac = (y[0] + beta / gam * y[-1]) / (1.0 + z[0] + beta / gam * z[-1])
    return (y - fac * z).reshape(rhs.shape)


def _ghost_arrays(x, r, ends, period):
    X = np.empty(len(x) + 2)
    R = np.empty(len(x) + 2)
    X[1:-1], R[1:-1] = x, r
    if ends[0] == "periodic":
        X[0], R[0], X[-1], R[-1] = x[-1] - period, r[-1], x[0] + period, r[0]
        return X, R
    for side, g, i1, i2 in ((0, 0, 1, 2), (1, -1, -2, -3)):
        if ends[side] == "capped":
            X[g], R[g] = X[i2], -R[i2]
        elif ends[side] == "open":
            X[g], R[g] = 2 * X[i1] - X[i2], R[i2]
    return X, R


def _advance(x, r, ends, period, n, dt):
    """One semi-implicit step on raw arrays; returns (x_new, r_new)."""
    m = len(x)
    X, R = _ghost_arrays(x, r, ends, period)
    xu = 0.5 * (X[2:] - X[:-2])
    ru = 0.5 * (R[2:] - R[:-2])
    speed2 = xu * xu + ru * ru
    c = dt / speed2
    tip = r == 0.0
    inv = 1.0 / np.sqrt(speed2)
    with np.errstate(divide="ignore", invalid="ignore"):
        react = np.where(tip, 0.0, -(n - 1) * xu * inv / r)
    rhs_x = x - dt * react * ru * inv
    rhs_r = r + dt * react * xu * inv
    diag = 1 + 2 * c
    if ends[0] == "periodic":
        rhs_x[0] -= c[0] * period
        rhs_x[-1] += c[-1] * period
        both = _cyclic(-c, diag, -c, np.column_stack([rhs_x, rhs_r]))
        return both[:, 0], both[:, 1]
    ab_x = np.zeros((3, m))
    ab_x[0, 1:] = -c[:-1]
    ab_x[1] = diag
    ab_x[2, :-1] = -c[1:]
    ab_r = ab_x.copy()
    for side, i, up in ((0, 0, True), (1, m - 1, False)):
        row = (0, 1) if up else (2, m - 2)
        if ends[side] == "capped":
            # tip: axis-regular reflection, the rotational term adds (n-1) copies
            cn = n * c[i]
            ab_x[1, i] = 1 + 2 * cn
            ab_x[row] = -2 * cn
            rhs_x[i] = x[i]
            ab_r[1, i], ab_r[row], rhs_r[i] = 1.0, 0.0, 0.0
        else:
            ab_x[1, i], ab_x[row], rhs_x[i] = 1.0, 0.0, x[i]
            ab_r[row] = -2 * c[i]
    x_new = solve_banded((1, 1), ab_x, rhs_x, check_finite=False)
    r_new = solve_banded((1, 1), ab_r, rhs_r, check_finite=False)
    r_new[tip] = 0.0
    return x_new, r_new


def _validate_step(x_new, r_new, state, radius_floor):
    """state may be a zero-argument callable; it is only built on failure."""
    tip = r_new == 0.0
    bad = not (np.min(np.diff(x_new)) > 0 and np.min(np.where(tip, 1.0, r_new)) > 0)
    if bad:
        raise RadiusUnderflow("profile degenerated during the step",
                              state=state() if callable(state) else state)
    _check_underflow(r_new, tip, radius_floor, state)


def step(state: FlowState, dt, radius_floor=0.0) -> FlowState:
    prof = state.profile
    x_new, r_new = _advance(prof.axis_samples, prof.radius, prof.ends, prof.period, prof.n, dt)
    _validate_step(x_new, r_new, state, radius_floor)
    new = RadialProfile(prof.n, x_new, r_new, prof.ends, prof.period)
    return FlowState(new, state.time + dt, state.step_count + 1)


def _check_underflow(r, tip, floor, state):
    if floor <= 0:
        return
    inner = r[1:-1]
    loc = (inner <= r[:-2]) & (inner <= r[2:]) & ~tip[1:-1]
    if np.any(loc & (inner < floor)):
        raise RadiusUnderflow(f"neck radius {inner[loc].min():.3e} fell below {floor:.3e}",
                              state=state() if callable(state) else state)


def curvature_sq(profile):
    lam_a, lam_r, _, _ = curvature_field(profile, 0)
    return lam_a ** 2 + (profile.n - 1) * lam_r ** 2


def adaptive_dt(state: FlowState, cfl=0.2):
    prof = state.profile
    seg = np.hypot(np.diff(prof.axis_samples), np.diff(prof.radius))
    if prof.periodic:
        seg = np.append(seg, np.hypot(prof.axis_samples[0] + prof.period - prof.axis_samples[-1],
                                      prof.radius[0] - prof.radius[-1]))
    h = seg.min()
    w2 = np.nanmax(curvature_sq(prof))
    return float(cfl * min(h * h, 1.0 / w2 if w2 > 0 else np.inf))


def remesh(profile: RadialProfile, m=None):
    """Resample uniformly in arclength with a cubic spline through the curve
    (ghost samples keep the tips and seams smooth)."""
    m = m or profile.m
    pad = 3
    X, R = _padded(profile, pad)
    if not profile.periodic:
        for side in (0, 1):
            if profile.ends[side] == "open":
                sl = slice(0, pad) if side == 0 else slice(-pad, None)
                src = profile.axis_samples
                if side == 0:
                    X[sl] = 2 * src[0] - src[pad:0:-1]
                    R[sl] = profile.radius[pad:0:-1]
                else:
                    X[sl] = 2 * src[-1] - src[-2:-pad - 2:-1]
                    R[sl] = profile.radius[-2:-pad - 2:-1]
    s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(X), np.diff(R)))])
    spl = CubicSpline(s, np.column_stack([X, R]))
    if profile.periodic:
        s0 = s[pad]
        t = s0 + np.arange(m) * (s[pad + profile.m] - s0) / m
    else:
        t = np.linspace(s[pad], s[pad + profile.m - 1], m)
    xr = spl(t)
    x, r = xr[:, 0], xr[:, 1]
    if not profile.periodic:
        x[0], x[-1] = profile.axis_samples[0], profile.axis_samples[-1]
        for side, i in ((0, 0), (1, -1)):
            r[i] = 0.0 if profile.ends[side] == "capped" else r[i]
    return RadialProfile(profile.n, x, r, profile.ends, profile.period)


def needs_remesh(profile, ratio):
    seg = np.hypot(np.diff(profile.axis_samples), np.diff(profile.radius))
    return seg.max() > ratio * seg.min()


# ---- event loop -----------------------------------------------------------------

def min_rhat(state: FlowState):
    H = state.curvatures[2]
    good = np.isfinite(H) & (H > 0)
    return (state.profile.n - 1) / H[good].max() if np.any(good) else 1.0


def _dt_and_hmax(x, r, ends, period, n, cfl):
    """adaptive_dt on raw arrays, plus max H (used for the snapshot spacing)."""
    X, R = _ghost_arrays(x, r, ends, period)
    xu = 0.5 * (X[2:] - X[:-2])
    ru = 0.5 * (R[2:] - R[:-2])
    xuu = X[2:] - 2 * X[1:-1] + X[:-2]
    ruu = R[2:] - 2 * R[1:-1] + R[:-2]
    sp = np.sqrt(xu * xu + ru * ru)
    lam_a = -(xu * ruu - ru * xuu) / sp ** 3
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_r = np.where(r == 0.0, lam_a, xu / (r * sp))
    w2 = np.nanmax(lam_a ** 2 + (n - 1) * lam_r ** 2)
    seg = np.hypot(np.diff(X[1:] if ends[0] == "periodic" else x),
                   np.diff(R[1:] if ends[0] == "periodic" else r))
    h = seg.min()
    hmax = np.nanmax(lam_a + (n - 1) * lam_r)
    return float(cfl * min(h * h, 1.0 / w2 if w2 > 0 else np.inf)), float(hmax), seg.max() / h


def run_until_event(state: FlowState, history: FlowHistory, params: NeckParams,
                    config: FlowConfig = FlowConfig(), initial_max_radius=None, on_step=None):
    """Advance until a neck is certified, the component becomes extinct,
    curvature exceeds the ceiling, or t_max is reached.

    on_step, if given, is called with the FlowState at every snapshot and check."""
    r_init = initial_max_radius or float(state.profile.radius.max())
    floor = config.radius_floor * r_init
    if not history.snapshots or history.last.time < state.time:
        history.append(state)
    t_last = state.time
    prof = state.profile
    n, ends, period = prof.n, prof.ends, prof.period
    x, r, t, count = prof.axis_samples, prof.radius, state.time, state.step_count
    for it in range(1, config.max_steps + 1):
        dt, hmax, ratio = _dt_and_hmax(x, r, ends, period, n, config.cfl)
        dt = min(dt, config.t_max - t)
        if dt <= 0:
            return Event("TimeLimit", t, FlowState(RadialProfile(n, x, r, ends, period), t, count))
        x_new, r_new = _advance(x, r, ends, period, n, dt)
        _validate_step(x_new, r_new,
                       lambda: FlowState(RadialProfile(n, x, r, ends, period), t, count), floor)
        x, r, t, count = x_new, r_new, t + dt, count + 1
        cur = None
        if np.max(seg := np.hypot(np.diff(x), np.diff(r))) > config.remesh_ratio * seg.min():
            cur = FlowState(remesh(RadialProfile(n, x, r, ends, period)), t, count)
            x, r = cur.profile.axis_samples, cur.profile.radius
        rhat_min = (n - 1) / hmax if hmax > 0 else 1.0
        snap = t - t_last >= config.snapshot_spacing * rhat_min ** 2
        check = it % config.check_interval == 0 or t >= config.t_max
        if not (snap or check):
            continue
        cur = cur or FlowState(RadialProfile(n, x, r, ends, period), t, count)
        if snap or check:
            history.append(cur)
            t_last = t
        if on_step is not None:
            on_step(cur)
        if not check:
            continue
        rmax = float(r.max())
        if rmax <= config.extinction_fraction * r_init:
            t_ext = t + rmax ** 2 / (2 * n)
            return Event("Extinction", t, cur, extinction_time=t_ext)
        H = cur.curvatures[2]
        if np.nanmax(H) * r_init >= config.curvature_ceiling:
            return Event("CurvatureCeiling", t, cur)
        cands = detect_neck_points(cur, history, params)
        good = [c for c in cands if c.certified]
        if good:
            return Event("NeckDetected", t, cur, candidates=good)
        if t >= config.t_max:
            return Event("TimeLimit", t, cur)
    cur = FlowState(RadialProfile(n, x, r, ends, period), t, count)
    return Event("TimeLimit", t, cur, detail="max_steps reached")


# ---- surgery ---------------------------------------------------------------------

def _cap_coefficients(r0, r1, r2, ell):
    """r(s)^2 = p(s), quartic matching r, r', r'' at s = 0 with p(ell) = 0 and
    p'(ell) = -2 r0 (tip curvature radius equal to the cut radius)."""
    c0, c1, c2 = r0 ** 2, 2 * r0 * r1, r1 ** 2 + r0 * r2
    A = np.array([[ell ** 3, ell ** 4], [3 * ell ** 2, 4 * ell ** 3]])
    b = np.array([-(c0 + c1 * ell + c2 * ell ** 2), -2 * r0 - (c1 + 2 * c2 * ell)])
    c3, c4 = np.linalg.solve(A, b)
    return np.array([c0, c1, c2, c3, c4])


def cap_samples(coef, ell, count):
    """Axial offsets s in (0, ell] (denser towards the tip) and radii."""
    tau = np.arange(1, count + 1) / count
    s = ell * np.sin(0.5 * np.pi * tau)
    p = np.polyval(coef[::-1], s)
    r = np.sqrt(np.clip(p, 0.0, None))
    r[-1] = 0.0
    return s, r


def _neck_window(state, p, eps):
    """Arclength extent of the contiguous epsilon-cylindrical run around p."""
    prof = state.profile
    lam_a, lam_r, H = state.curvatures
    rhat = (prof.n - 1) / H[p]
    dev = np.maximum(np.abs(lam_a * rhat), np.abs(lam_r * rhat - 1.0))
    ok = np.isfinite(dev) & (dev <= eps) & (prof.radius > 0)
    lo = hi = p
    while lo - 1 >= 0 and ok[lo - 1]:
        lo -= 1
    while hi + 1 < prof.m and ok[hi + 1]:
        hi += 1
    s = prof.arclength()
    return lo, hi, s[hi] - s[lo]


def _derivs_at(x, r, i):
    """r' and r'' in x at sample i (nonuniform three-point formulas)."""
    h0, h1 = x[i] - x[i - 1], x[i + 1] - x[i]
    d1 = (r[i + 1] * h0 ** 2 - r[i - 1] * h1 ** 2 + r[i] * (h1 ** 2 - h0 ** 2)) / (h0 * h1 * (h0 + h1))
    d2 = 2 * (r[i + 1] * h0 + r[i - 1] * h1 - r[i] * (h0 + h1)) / (h0 * h1 * (h0 + h1))
    return d1, d2


def two_convexity(profile: RadialProfile):
    """lambda_1 + lambda_2 per sample (n >= 3)."""
    lam_a, lam_r, _, _ = curvature_field(profile, 0)
    return np.minimum(lam_a + lam_r, 2 * lam_r)


def perform_surgery(state: FlowState, candidate: NeckCandidate, config: SurgeryConfig = SurgeryConfig(),
                    epsilon=0.2, cap_points=None):
    """Cut the neck around the candidate and close both sides with convex caps.

    Samples outside the removed interval and the cap zones are untouched."""
    prof = state.profile
    period = prof.period if prof.periodic else None
    if prof.periodic:
        prof, p = _unwrap_at(prof, candidate.index)
    else:
        p = candidate.index
    st = FlowState(prof, state.time, state.step_count)
    H = st.curvatures[2]
    rhat = (prof.n - 1) / H[p]
    lo, hi, length = _neck_window(st, p, epsilon)
    if length < config.min_neck_length * rhat:
        raise NeckTooShort(f"cylindrical window {length / rhat:.2f} r_hat < "
                           f"{config.min_neck_length}")
    x, r = prof.axis_samples, prof.radius
    xc = x[p]
    iL = int(np.searchsorted(x, xc - config.cut_half_width * rhat, side="right") - 1)
    iR = int(np.searchsorted(x, xc + config.cut_half_width * rhat, side="left"))
    if iL < max(lo, 1) or iR > min(hi, prof.m - 2):
        raise NeckTooShort("cut points fall outside the cylindrical window")
    h = np.median(np.diff(x[iL - 1: iR + 2]))
    caps, pieces = [], []
    for side, i in (("left", iL), ("right", iR)):
        d1, d2 = _derivs_at(x, r, i)
        sign = 1.0 if side == "left" else -1.0
        ell = config.cap_length * r[i]
        coef = _cap_coefficients(r[i], sign * d1, d2, ell)
        count = cap_points or max(16, int(np.ceil(1.5 * ell / h)))
        s, rc = cap_samples(coef, ell, count)
        _verify_cap(coef, ell, prof.n)
        xs = x[i] + sign * s
        if side == "right":
            xs, rc = xs[::-1], rc[::-1]
        pieces.append((xs, rc))
        caps.append({"side": side, "cut_x": float(x[i]), "cut_radius": float(r[i]),
                     "length": float(ell), "coefficients": [float(v) for v in coef]})
    if pieces[0][0][-1] >= pieces[1][0][0]:
        raise CapConvexityFailure("caps overlap; widen cut_half_width")
    if period is None:
        xn = np.concatenate([x[:iL + 1], pieces[0][0], pieces[1][0], x[iR:]])
        rn = np.concatenate([r[:iL + 1], pieces[0][1], pieces[1][1], r[iR:]])
        new = RadialProfile(prof.n, xn, rn, prof.ends)
    else:
        # a cut tube stays connected: right cap, tube through the seam, left cap
        xn = np.concatenate([pieces[1][0], x[iR:], x[:iL + 1] + period, pieces[0][0] + period])
        rn = np.concatenate([pieces[1][1], r[iR:], r[:iL + 1], pieces[0][1]])
        new = RadialProfile(prof.n, xn, rn, ("capped", "capped"))
    _verify_glue(new, caps)
    cert = candidate.certificate or NeckCertificate()
    record = SurgeryRecord(state.time, (float(x[iL]), float(x[iR])), {"caps": caps,
                           "rhat": float(rhat), "center": float(xc)}, cert)
    return FlowState(new, state.time, state.step_count), record


def _unwrap_at(profile, p):
    """Rotate a periodic profile so the seam sits opposite sample p; open ends.
    Returns the new profile and the new index of p."""
    m = profile.m
    shift = (p + m // 2) % m
    idx = np.r_[shift:m, 0:shift]
    x = profile.axis_samples[idx].copy()
    x[m - shift:] += profile.period
    return RadialProfile(profile.n, x, profile.radius[idx], ("open", "open")), (p - shift) % m


def _verify_cap(coef, ell, n=3, samples=400):
    s = np.linspace(0, ell, samples + 1)[:-1]
    p = np.polyval(coef[::-1], s)
    dp = np.polyval(np.polyder(coef[::-1]), s)
    d2p = np.polyval(np.polyder(coef[::-1], 2), s)
    if np.any(p <= 0):
        raise CapConvexityFailure("cap closes before its nominal length")
    if np.any(dp[1:] >= 0):
        raise CapConvexityFailure("cap radius is not monotone")
    # r' = p'/(2r), r'' = (p''/2 - r'^2)/r; the cap may bend outward right
    # at a concave-up cut, so it is two-convexity that is required
    r = np.sqrt(p)
    rp = dp / (2 * r)
    rpp = (0.5 * d2p - rp ** 2) / r
    lam_a = -rpp / (1 + rp ** 2) ** 1.5
    lam_r = 1.0 / (r * np.sqrt(1 + rp ** 2))
    if np.any(lam_a + lam_r < 0) or np.any(lam_a + (n - 1) * lam_r <= 0):
        raise CapConvexityFailure("cap violates two-convexity")


def _verify_glue(profile, caps):
    """H > 0 and two-convexity over each cap and a cap-length collar outside it."""
    for part in split_components(FlowState(profile)):
        prof = part.profile
        lam_a, lam_r, H, _ = curvature_field(prof, 0)
        x = prof.axis_samples
        for cap in caps:
            sign = 1 if cap["side"] == "left" else -1
            lo, hi = sorted((cap["cut_x"] - sign * cap["length"],
                             cap["cut_x"] + sign * cap["length"]))
            zone = (x >= lo) & (x <= hi) & np.isfinite(H)
            if not np.any(zone):
                continue
            if np.any(H[zone] <= 0):
                raise CapConvexityFailure("mean curvature not positive across the cap")
            if np.any(two_convexity(prof)[zone] < 0):
                raise CapConvexityFailure("two-convexity violated across the glue")


def split_components(state: FlowState):
    """One FlowState per maximal piece between axis closures."""
    prof = state.profile
    zeros = np.flatnonzero(prof.radius == 0.0)
    interior = [i for i in zeros if 0 < i < prof.m - 1]
    if not interior:
        return [state]
    bounds, start = [], 0
    k = 0
    while k < len(interior):
        i = interior[k]
        if k + 1 < len(interior) and interior[k + 1] == i + 1:
            bounds.append((start, i))
            start = i + 1
            k += 2
        else:
            bounds.append((start, i))
            start = i
            k += 1
    bounds.append((start, prof.m - 1))
    out = []
    for a, b in bounds:
        if b - a + 1 < 16:
            continue
        ends = ("capped" if prof.radius[a] == 0 else prof.ends[0],
                "capped" if prof.radius[b] == 0 else prof.ends[1])
        if prof.periodic:
            ends = tuple("capped" if e == "periodic" else e for e in ends)
        sub = RadialProfile(prof.n, prof.axis_samples[a:b + 1], prof.radius[a:b + 1], ends)
        out.append(FlowState(sub, state.time, state.step_count))
    return out


def enclosed_volume(profile: RadialProfile):
    from .profile import enclosed_volume as vol
    return vol(profile)


# ---- classification ------------------------------------------------------------

def terminal_classify(component: FlowState, history: FlowHistory, tol=1e-6):
    """Sphere / TubeS1 / Unresolved for a terminal component."""
    prof = component.profile
    if prof.periodic:
        from .algebra import classify_gluing, extend_maximal_profile
        try:
            label = classify_gluing(extend_maximal_profile(prof))
        except Exception:  # noqa: BLE001 - anything short of a periodic result
            return "Unresolved"
        return label if label == "TubeS1" else "Unresolved"
    if prof.ends != ("capped", "capped"):
        return "Unresolved"
    lo, hi = prof.axis_samples[0], prof.axis_samples[-1]
    for snap in list(history.snapshots) + [component]:
        sp = snap.profile
        if sp.periodic:
            return "Unresolved"
        lam_a, lam_r, H = snap.curvatures
        scale = np.nanmax(np.abs(np.stack([lam_a, lam_r])))
        sel = (sp.axis_samples >= lo) & (sp.axis_samples <= hi) & np.isfinite(lam_a)
        tc = np.minimum(lam_a + lam_r, 2 * lam_r)[sel]
        if np.any(tc < -tol * scale):
            return "Unresolved"
    return "Sphere"


# ---- full pipeline ---------------------------------------------------------------

def waist_radius(profile: RadialProfile):
    """Smallest interior local minimum of the radius (the largest radius when
    there is none, as for convex profiles)."""
    r = profile.radius
    if profile.periodic:
        left, right = np.roll(r, 1), np.roll(r, -1)
        mins = r[(r <= left) & (r <= right)]
    else:
        inner = r[1:-1]
        mins = inner[(inner <= r[:-2]) & (inner <= r[2:]) & (inner > 0)]
    return float(mins.min()) if len(mins) else float(r.max())


@dataclass
class ComponentResult:
    state: FlowState
    history: FlowHistory
    events: list
    label: str = "Unresolved"


@dataclass
class PipelineResult:
    events: list
    surgeries: list
    components: list
    series: list
    diagnostics: list = field(default_factory=list)


def run_pipeline(profile: RadialProfile, params: NeckParams, flow: FlowConfig = FlowConfig(),
                 surgery: SurgeryConfig = SurgeryConfig(), max_surgeries=8, max_events=64):
    """flow -> detect -> surgery -> split -> ... -> classify every component."""
    r_init = float(profile.radius.max())
    series, events, surgeries, diagnostics, done = [], [], [], [], []

    def record(st):
        lam_a, lam_r, H = st.curvatures
        ok = np.isfinite(H) & (st.profile.radius > 0)
        ratio = np.minimum(lam_a, lam_r)[ok] / H[ok]
        series.append((st.time, waist_radius(st.profile),
                       float(np.nanmax(H)), float(ratio.min())))

    queue = [(FlowState(profile), FlowHistory(flow.snapshot_capacity))]
    while queue:
        state, hist = queue.pop(0)
        comp_events = []
        while True:
            if len(events) >= max_events:
                diagnostics.append("event budget exhausted")
                done.append(ComponentResult(state, hist, comp_events, "Unresolved"))
                break
            try:
                ev = run_until_event(state, hist, params, flow, r_init, on_step=record)
            except RadiusUnderflow as exc:
                diagnostics.append(f"RadiusUnderflow: {exc}")
                ev = Event("RadiusUnderflow", exc.state.time if exc.state else state.time,
                           exc.state or state, detail=str(exc))
                events.append(ev)
                comp_events.append(ev)
                done.append(ComponentResult(ev.state, hist, comp_events, "Unresolved"))
                break
            events.append(ev)
            comp_events.append(ev)
            if ev.kind == "NeckDetected" and len(surgeries) < max_surgeries:
                cand = max(ev.candidates, key=lambda c: c.H)
                try:
                    new_state, rec = perform_surgery(ev.state, cand, surgery, params.epsilon)
                except (NeckTooShort, CapConvexityFailure) as exc:
                    diagnostics.append(f"{type(exc).__name__}: {exc}")
                    done.append(ComponentResult(ev.state, hist, comp_events, "Unresolved"))
                    break
                surgeries.append(rec)
                parts = split_components(new_state)
                for part in parts:
                    h2 = hist.copy()
                    h2.record_surgery(rec)
                    queue.append((part, h2))
                break
            if ev.kind in ("Extinction", "CurvatureCeiling", "TimeLimit", "NeckDetected"):
                label = terminal_classify(ev.state, hist) if ev.kind != "TimeLimit" or \
                    ev.state.profile.periodic else "Unresolved"
                done.append(ComponentResult(ev.state, hist, comp_events, label))
                break
    return PipelineResult(events, surgeries, done, series, diagnostics)


def profile_volume_removed(before: RadialProfile, record: SurgeryRecord):
    """Trapezoid volume of the original profile over the removed interval."""
    x, r = before.axis_samples, before.radius ** before.n
    lo, hi = record.region
    sel = (x >= lo) & (x <= hi)
    return unit_ball_volume(before.n) * trapezoid(r[sel], x[sel])
