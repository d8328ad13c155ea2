"""Quantitative neck predicates and the detection scan."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import (InsufficientHistory, InsufficientSamples, MissingDerivatives, NonPositiveH,
                     SurgeryInWindow, WindowExceedsDomain)
from .graph import CylinderGraph, conformal_deviation, graph_weingarten, mean_radii
from .history import FlowHistory, FlowState
from .profile import RadialProfile, WeingartenData


@dataclass(frozen=True)
class NeckParams:
    epsilon: float = 0.2
    k: int = 1
    L: float = 2.0
    theta: float = 0.5
    H0: float = 1.0
    eta0: float = 0.04

    def __post_init__(self):
        for name in ("epsilon", "L", "theta", "H0", "eta0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.k < 1 or int(self.k) != self.k:
            raise ValueError("k must be an integer >= 1")
        if self.L < 1:
            raise ValueError("L must be at least 1")

    def replace(self, **kw):
        return NeckParams(**{**asdict(self), **kw})


def default_params(profile, **overrides):
    """NeckParams with H0 tied to the profile size (ten over its axial extent)."""
    extent = float(np.ptp(profile.axis_samples))
    if profile.periodic:
        extent = float(profile.period)
    return NeckParams(**{"H0": 10.0 / extent, **overrides})


@dataclass
class NeckCertificate:
    """Named residuals with their tolerances; passes iff every residual does."""

    residuals: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def add(self, name, residual, tolerance):
        self.residuals[name] = float(residual)
        self.tolerances[name] = float(tolerance)
        return self

    @property
    def flags(self):
        return {k: bool(self.residuals[k] <= self.tolerances[k]) for k in self.residuals}

    @property
    def passed(self):
        return all(self.flags.values()) and not self.notes.get("failed")

    def __bool__(self):
        return self.passed

    def merged(self, other, prefix=""):
        out = NeckCertificate(dict(self.residuals), dict(self.tolerances), dict(self.notes))
        for k, v in other.residuals.items():
            out.add(prefix + k, v, other.tolerances[k])
        out.notes.update({prefix + k: v for k, v in other.notes.items()})
        return out

    def to_dict(self):
        return {
            "pass": self.passed,
            "conditions": {k: {"residual": self.residuals[k], "tolerance": self.tolerances[k],
                               "pass": self.flags[k]} for k in self.residuals},
            "notes": dict(self.notes),
        }

    @classmethod
    def from_dict(cls, d):
        c = cls()
        for k, v in d["conditions"].items():
            c.add(k, v["residual"], v["tolerance"])
        c.notes.update(d.get("notes", {}))
        return c


@dataclass(frozen=True)
class ParabolicNeighborhood:
    center: tuple
    spatial_indices: np.ndarray
    time_window: tuple
    snapshot_refs: tuple
    rhat: float
    x_range: tuple = (0.0, 0.0)


@dataclass
class NeckCandidate:
    index: int
    x: float
    H: float
    rhat: float
    certificate: NeckCertificate | None = None
    annotation: str = ""

    @property
    def certified(self):
        return self.certificate is not None and self.certificate.passed


# ---- pointwise predicates ----------------------------------------------------

def cylinder_eigenvalues(n):
    return np.array([0.0] + [1.0] * (n - 1))


def is_eps_cylindrical(w: WeingartenData, epsilon):
    if not w.H > 0:
        raise NonPositiveH(f"H = {w.H}")
    n = len(w.eigenvalues)
    rhat = (n - 1) / w.H
    dev = float(np.max(np.abs(np.sort(w.eigenvalues) * rhat - cylinder_eigenvalues(n))))
    return dev <= epsilon, dev


def parallel_residual(grad_norms, rhat, k):
    if len(grad_norms) < k:
        raise MissingDerivatives(f"need {k} derivative norms, have {len(grad_norms)}")
    return max((grad_norms[l - 1] * rhat ** (l + 1) for l in range(1, k + 1)), default=0.0)


def is_eps_k_parallel(w: WeingartenData, epsilon, k):
    """Scale-normalized |nabla^l W| r_hat^(l+1) <= epsilon for l = 1..k.

    When H <= 0 the grad norms are taken to be already normalized (r_hat = 1).
    """
    n = len(w.eigenvalues)
    rhat = (n - 1) / w.H if w.H > 0 else 1.0
    return bool(parallel_residual(w.grad_norms, rhat, k) <= epsilon)


# ---- profile balls -------------------------------------------------------------

def _ball(profile: RadialProfile, p, radius):
    """Indices within arclength `radius` of sample p, and the axis range covered."""
    s = profile.arclength()
    if profile.periodic:
        total = profile.total_length()
        d = np.abs(s - s[p])
        d = np.minimum(d, total - d)
        idx = np.flatnonzero(d <= radius)
        if radius >= 0.5 * total:
            return idx, (-np.inf, np.inf)
        x = profile.axis_samples
        return idx, (x[p] - radius, x[p] + radius)
    lo, hi = s[p] - radius, s[p] + radius
    if (lo < s[0] and profile.ends[0] == "open") or (hi > s[-1] and profile.ends[1] == "open"):
        raise WindowExceedsDomain("ball of radius L*r_hat leaves the profile")
    idx = np.flatnonzero((s >= lo) & (s <= hi))
    x = profile.axis_samples
    return idx, (x[idx[0]], x[idx[-1]])


def is_curvature_neck(profile: RadialProfile, p, params: NeckParams, history=None, fields=None):
    """(epsilon, k, L) curvature-neck check at sample p.

    Every sample of the ball B(p, L r_hat(p)) must be epsilon-cylindrical
    and (epsilon, k)-parallel, both normalized at the central r_hat.
    """
    k = params.k
    lam_a, lam_r, H, grad = fields if fields is not None else _fields(profile, k)
    if not H[p] > 0:
        raise NonPositiveH(f"H = {H[p]} at the centre")
    n = profile.n
    rhat = (n - 1) / H[p]
    idx, _ = _ball(profile, p, params.L * rhat)
    la, lr, g = lam_a[idx], lam_r[idx], grad[:k, idx]
    if not (np.all(np.isfinite(la)) and np.all(np.isfinite(lr)) and np.all(np.isfinite(g))):
        raise WindowExceedsDomain("derivative stencils in the ball leave the profile")
    eig = np.sort(np.stack([la] + [lr] * (n - 1), axis=1), axis=1) * rhat
    cyl = float(np.max(np.abs(eig - cylinder_eigenvalues(n))))
    scales = rhat ** (np.arange(1, k + 1) + 1.0)
    par = float(np.max(g * scales[:, None])) if k else 0.0
    cert = NeckCertificate()
    cert.add("cylindrical", cyl, params.epsilon)
    cert.add("parallel", par, params.epsilon)
    cert.notes["rhat"] = float(rhat)
    cert.notes["ball_size"] = int(len(idx))
    return cert


def _fields(profile, k):
    from .profile import curvature_field
    return curvature_field(profile, k)


def _state_fields(state: FlowState, k):
    return state.curvature_derivatives(k)


# ---- graph necks -------------------------------------------------------------

def is_hypersurface_neck(graph: CylinderGraph, params: NeckParams):
    """Geometric neck conditions for a graph over the cylinder: conformal
    closeness of the metric, shape operator near r(z)^-1 W_bar with small
    derivatives, and small log-derivatives of the mean radius."""
    eps, k = params.epsilon, params.k
    radii = mean_radii(graph)
    conf = conformal_deviation(graph, k)
    conf_res = max(max(a, b) for a, b in conf)
    eig, dn, _ = graph_weingarten(graph, k)
    cyl = float(np.max(np.abs(eig * radii[:, None, None] - cylinder_eigenvalues(3))))
    scales = radii[:, None, None] ** (np.arange(1, k + 1) + 1.0)[None, None, :]
    par = float(np.max(dn * scales))
    logr = np.log(radii)
    z = graph.heights
    worst = 0.0
    d = logr
    for _ in range(k):
        d = np.gradient(d, z, edge_order=2) if len(z) >= 3 else np.gradient(d, z)
        worst = max(worst, float(np.max(np.abs(d))))
    cert = NeckCertificate()
    cert.add("conformal", conf_res, eps)
    cert.add("cylindrical", cyl, eps)
    cert.add("parallel", par, eps)
    cert.add("log_radius", worst, eps)
    cert.add("embedded", float(np.abs(graph.u).max() / graph.scale), 0.5 - 1e-12)
    return cert


# ---- history-based predicates --------------------------------------------------

def _snapshot_at(history: FlowHistory, t, tol=1e-12):
    for s in reversed(history.snapshots):
        if abs(s.time - t) <= tol * max(1.0, abs(t)):
            return s
    raise InsufficientHistory(f"no snapshot at t = {t}")


def backward_parabolic_neighborhood(history: FlowHistory, p, t, params: NeckParams,
                                    state: FlowState | None = None):
    state = state if state is not None else _snapshot_at(history, t)
    H = state.curvatures[2]
    if not H[p] > 0:
        raise NonPositiveH(f"H = {H[p]} at the centre")
    rhat = (state.profile.n - 1) / H[p]
    t0 = t - rhat ** 2 * params.theta
    times = history.times
    if len(times) == 0 or t0 < times[0] - 1e-12 * max(1.0, abs(t0)):
        raise InsufficientHistory(f"history starts after the window start {t0}")
    idx, xr = _ball(state.profile, p, params.L * rhat)
    before = np.flatnonzero(times <= t0)
    first = before[-1] if len(before) else 0
    refs = tuple(float(tt) for tt in times[first:] if tt <= t + 1e-12 * max(1.0, abs(t)))
    return ParabolicNeighborhood((int(p), float(t)), idx, (float(t0), float(t)), refs,
                                 float(rhat), (float(xr[0]), float(xr[1])))


def surgeries_in_window(history: FlowHistory, nbhd: ParabolicNeighborhood):
    t0, t1 = nbhd.time_window
    lo, hi = nbhd.x_range
    return [s for s in history.surgeries if t0 <= s.time <= t1 and s.overlaps(lo, hi)]


def shrinking_neck_certificate(history: FlowHistory, nbhd: ParabolicNeighborhood,
                               params: NeckParams):
    """Every snapshot of the window passes the curvature-neck check (centre
    tracked by nearest axis position) and the central radius follows the
    shrinking cylinder law r(t)^2 = r(t0)^2 + 2(n-1)(t0 - t) backward in time."""
    if surgeries_in_window(history, nbhd):
        raise SurgeryInWindow("a surgery intersects the backward neighbourhood")
    t_start, t_end = nbhd.time_window
    snaps = [s for s in history.snapshots if s.time in set(nbhd.snapshot_refs)]
    if not snaps:
        raise InsufficientHistory("no snapshots cover the window")
    current = snaps[-1]
    p = nbhd.center[0]
    xc = current.profile.axis_samples[p]
    n = current.profile.n
    r_now = current.profile.radius[p]
    cert = NeckCertificate()
    worst_cyl = worst_par = worst_law = 0.0
    samples = []
    for s in snaps:
        q = int(np.argmin(np.abs(s.profile.axis_samples - xc)))
        samples.append((s.time, s.profile.radius[q]))
        if s.time < t_start - 1e-12:
            continue
        try:
            c = is_curvature_neck(s.profile, q, params, fields=_state_fields(s, params.k))
        except (NonPositiveH, WindowExceedsDomain, InsufficientSamples) as exc:
            cert.notes["failed"] = f"{type(exc).__name__} at t={s.time}"
            worst_cyl = np.inf
            continue
        worst_cyl = max(worst_cyl, c.residuals["cylindrical"])
        worst_par = max(worst_par, c.residuals["parallel"])
    times = np.array([a for a, _ in samples])
    radii = np.array([b for _, b in samples])
    query = np.concatenate([[t_start], times[times >= t_start]])
    r_obs = np.interp(query, times, radii)
    r_model = np.sqrt(r_now ** 2 + 2 * (n - 1) * (t_end - query))
    worst_law = float(np.max(np.abs(r_obs / r_model - 1.0)))
    if len(times[times >= t_start - 1e-12]) < 2 and t_end > t_start:
        cert.notes["failed"] = "window holds fewer than two snapshots"
    cert.add("cylindrical", worst_cyl, params.epsilon)
    cert.add("parallel", worst_par, params.epsilon)
    cert.add("radius_law", worst_law, params.epsilon)
    cert.notes["snapshots"] = len(snaps)
    return cert


def is_shrinking_curvature_neck(history: FlowHistory, nbhd: ParabolicNeighborhood,
                                params: NeckParams):
    return shrinking_neck_certificate(history, nbhd, params).passed


def relaxed_params(params: NeckParams):
    """Ball one r_hat shorter (never below 1) and half the time depth."""
    return params.replace(L=max(1.0, params.L - 1.0), theta=params.theta / 2)


def relaxed_certificate(history: FlowHistory, p, t, params: NeckParams,
                        state: FlowState | None = None):
    """Shrinking-neck certificate on the smaller (L - 1, theta / 2) neighbourhood."""
    rp = relaxed_params(params)
    nb = backward_parabolic_neighborhood(history, p, t, rp, state=state)
    return shrinking_neck_certificate(history, nb, rp)


# ---- detection scan ------------------------------------------------------------

def scan_neck_points(state: FlowState, history: FlowHistory, params: NeckParams, certify=True,
                     second_pass=False):
    """ND1 trigger, ND2 exclusion, de-duplication, certification.

    With ``second_pass`` each certificate also carries the relaxed
    (L - 1, theta / 2) check under the prefix ``relaxed_``.
    Returns (candidates sorted by descending H, excluded candidates)."""
    prof = state.profile
    lam_a, lam_r, H = state.curvatures
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.minimum(lam_a, lam_r) / H
    ok = np.isfinite(H) & (H >= params.H0) & (ratio <= params.eta0) & (prof.radius > 0)
    order = np.flatnonzero(ok)
    order = order[np.argsort(-H[order], kind="stable")]
    s = prof.arclength()
    total = prof.total_length()
    kept, excluded, balls = [], [], []
    for p in order:
        rhat = (prof.n - 1) / H[p]
        cand = NeckCandidate(int(p), float(prof.axis_samples[p]), float(H[p]), float(rhat))
        try:
            nb = backward_parabolic_neighborhood(history, p, state.time, params, state=state)
        except WindowExceedsDomain:
            continue
        except InsufficientHistory:
            nb = None
        if nb is not None and surgeries_in_window(history, nb):
            cand.annotation = "SurgeryInWindow"
            excluded.append(cand)
            continue
        radius = params.L * rhat
        clash = False
        for (c, rad) in balls:
            d = abs(s[p] - c)
            if prof.periodic:
                d = min(d, total - d)
            if d <= radius + rad:
                clash = True
                break
        if clash:
            continue
        balls.append((s[p], radius))
        if certify:
            if nb is None:
                cand.certificate = NeckCertificate(notes={"failed": "InsufficientHistory"})
                cand.annotation = "InsufficientHistory"
            else:
                try:
                    cand.certificate = shrinking_neck_certificate(history, nb, params)
                    if second_pass:
                        extra = relaxed_certificate(history, p, state.time, params, state)
                        cand.certificate = cand.certificate.merged(extra, "relaxed_")
                except InsufficientHistory as exc:
                    cand.certificate = NeckCertificate(notes={"failed": str(exc)})
                    cand.annotation = "InsufficientHistory"
        kept.append(cand)
    return kept, excluded


def detect_neck_points(state: FlowState, history: FlowHistory, params: NeckParams, certify=True,
                       second_pass=False):
    return scan_neck_points(state, history, params, certify, second_pass)[0]
