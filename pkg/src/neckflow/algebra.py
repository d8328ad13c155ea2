"""Isometries between normal necks, merging, maximal extension and gluing labels."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .detection import NeckParams, is_hypersurface_neck
from .errors import (AmbiguousLift, CertificationFailure, IncompleteData, InputError,
                     LiftExitsCylinder, NeckflowError, NoOverlap, OrientationIncompatible,
                     ResidualTooLarge)
from .graph import CylinderGraph
from .normal import NormalNeck, build_normal_neck, certify_normal
from .profile import RadialProfile, curvature_field
from .sphere_mesh import icosphere

MATCH_TOL = 1e-5


# ---- isometries of the standard cylinder ----------------------------------------

@dataclass(frozen=True, eq=False)
class CylinderIsometry:
    """(w, z) -> (R w, +-z + z_shift)."""

    rotation: np.ndarray
    z_shift: float = 0.0
    z_flip: bool = False

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10:
            raise InputError("rotation is not orthogonal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "z_shift", float(self.z_shift))
        object.__setattr__(self, "z_flip", bool(self.z_flip))

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @property
    def sign(self):
        return -1.0 if self.z_flip else 1.0

    @property
    def orientation_preserving(self):
        return bool(np.linalg.det(self.rotation) * self.sign > 0)

    def apply(self, omega, z):
        return np.asarray(omega) @ self.rotation.T, self.sign * np.asarray(z) + self.z_shift

    def compose(self, other: "CylinderIsometry") -> "CylinderIsometry":
        """self o other."""
        return CylinderIsometry(self.rotation @ other.rotation,
                                self.sign * other.z_shift + self.z_shift,
                                self.z_flip != other.z_flip)

    def inverse(self):
        return CylinderIsometry(self.rotation.T, -self.sign * self.z_shift, self.z_flip)

    def distance(self, other):
        return max(float(np.max(np.abs(self.rotation - other.rotation))),
                   abs(self.z_shift - other.z_shift),
                   0.0 if self.z_flip == other.z_flip else np.inf)

    def to_dict(self):
        return {"rotation": [float(v) for v in self.rotation.ravel()], "z_shift": self.z_shift,
                "z_flip": self.z_flip, "orientation_preserving": self.orientation_preserving}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["rotation"], dtype=float).reshape(3, 3), d["z_shift"],
                   d["z_flip"])


def reparametrize(neck: NormalNeck, F: CylinderIsometry) -> NormalNeck:
    """The neck N o F: sphere maps become R^T G, labels s (z - shift), and the
    leaf order is reversed for a flip so labels stay increasing."""
    R, sgn = F.rotation, F.sign
    leaves = []
    for lf in neck.foliation:
        lab = sgn * (lf.label - F.z_shift)
        leaves.append(replace(lf, G=np.asarray(lf.G) @ R, label=float(lab),
                              rotation=R.T @ lf.rotation))
    labels = sgn * (np.asarray(neck.z_coordinate) - F.z_shift)
    log = [R.T @ r for r in neck.rotation_log]
    if F.z_flip:
        leaves, labels, log = leaves[::-1], labels[::-1], log[::-1]
    return replace(neck, foliation=leaves, z_coordinate=np.asarray(labels), rotation_log=log)


def restrict(neck: NormalNeck, k0, k1) -> NormalNeck:
    """Leaves k0..k1 (inclusive)."""
    return replace(neck, foliation=neck.foliation[k0:k1 + 1],
                   z_coordinate=np.asarray(neck.z_coordinate)[k0:k1 + 1],
                   rotation_log=neck.rotation_log[k0:k1 + 1])


# ---- neck coordinates of ambient points -------------------------------------------

def _leaf_stack(neck):
    return (np.stack([lf.heights for lf in neck.foliation]),
            np.stack([np.asarray(lf.G) for lf in neck.foliation]),
            np.asarray(neck.z_coordinate, dtype=float))


def neck_coordinates(neck: NormalNeck, points):
    """Sphere coordinates, height labels and an inside mask for ambient points
    (graph frame of the neck).  Linear in the leaf index and across faces."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    graph = neck.graph
    mesh = graph.sphere_mesh
    s = graph.scale
    hts, Gs, labels = _leaf_stack(neck)
    if hts[-1].mean() < hts[0].mean():
        hts, Gs, labels = hts[::-1], Gs[::-1], labels[::-1]
    f, bary = mesh.locate(P[:, :3])
    idx = mesh.faces[f]
    hq = np.einsum("nk,lnk->ln", bary, hts[:, idx])
    zq = P[:, 3] / s
    above = zq[None, :] >= hq - 1e-12
    k = np.clip(above.sum(axis=0) - 1, 0, len(hts) - 2)
    cols = np.arange(len(P))
    lo, hi = hq[k, cols], hq[k + 1, cols]
    t = (zq - lo) / (hi - lo)
    tol = 1e-9
    inside = (t >= -tol) & (t <= 1 + tol)
    t = np.clip(t, 0.0, 1.0)
    ga = np.einsum("nk,nkd->nd", bary, Gs[k[:, None], idx])
    gb = np.einsum("nk,nkd->nd", bary, Gs[k[:, None] + 1, idx])
    ga /= np.linalg.norm(ga, axis=1)[:, None]
    gb /= np.linalg.norm(gb, axis=1)[:, None]
    om = (1 - t)[:, None] * ga + t[:, None] * gb
    om /= np.linalg.norm(om, axis=1)[:, None]
    z = (1 - t) * labels[k] + t * labels[k + 1]
    return om, z, inside


def _samples(neck: NormalNeck):
    pos = np.concatenate([lf.positions for lf in neck.foliation])
    G = np.concatenate([np.asarray(lf.G) for lf in neck.foliation])
    z = np.concatenate([np.full(len(lf.positions), lf.label) for lf in neck.foliation])
    return pos, G, z


def orthogonal_procrustes(X, Y):
    """R in O(3) minimizing sum |R x_i - y_i|^2 (improper allowed)."""
    U, _, Vt = np.linalg.svd(Y.T @ X)
    return U @ Vt


def _check_seed(neck1, neck2, seed, tol):
    if seed is None:
        return
    (k1, v1), (k2, v2) = seed
    p1 = neck1.foliation[k1].positions[v1]
    p2 = neck2.foliation[k2].positions[v2]
    if np.linalg.norm(p1 - p2) > tol * neck1.graph.scale:
        raise NoOverlap("seed points do not have the same image")


def fit_isometry(neck1: NormalNeck, neck2: NormalNeck, seed=None, tol=MATCH_TOL):
    """Cylinder isometry F with neck2 = neck1 o F over the common image, and the
    maximal mismatch after alignment."""
    _check_seed(neck1, neck2, seed, tol)
    pos, G2, z2 = _samples(neck2)
    om1, z1, inside = neck_coordinates(neck1, pos)
    if inside.sum() < 4:
        raise NoOverlap("the necks have no common cross-sections")
    G2, z2, om1, z1 = G2[inside], z2[inside], om1[inside], z1[inside]
    if np.ptp(z2) > 0:
        sgn = 1.0 if np.cov(z1, z2)[0, 1] >= 0 else -1.0
    else:
        # a single common leaf: orientation from the leaf ordering
        sgn = 1.0 if (np.mean(neck2.foliation[-1].heights) - np.mean(neck2.foliation[0].heights)) * \
            (np.mean(neck1.foliation[-1].heights) - np.mean(neck1.foliation[0].heights)) >= 0 else -1.0
    shift = float(np.mean(z1 - sgn * z2))
    R = orthogonal_procrustes(G2, om1)
    F = CylinderIsometry(R, shift, sgn < 0)
    res = max(float(np.max(np.linalg.norm(G2 @ R.T - om1, axis=1))),
              float(np.max(np.abs(sgn * z2 + shift - z1))))
    if res > tol:
        raise ResidualTooLarge(f"best isometry leaves residual {res:.3e}")
    return F, res


# ---- path lifting -----------------------------------------------------------------

@dataclass
class LiftResult:
    omega: np.ndarray
    z: np.ndarray
    drift: float
    steps: int


def equatorial_path(neck: NormalNeck, leaf, half=False):
    """Vertices of one leaf near the equator of the sphere grid, ordered by angle
    (half=True keeps an arc of angle pi)."""
    v = neck.graph.sphere_mesh.vertices
    band = np.flatnonzero(np.abs(v[:, 2]) < 1e-12)
    if len(band) == 0:
        band = np.flatnonzero(np.abs(v[:, 2]) <= np.sort(np.abs(v[:, 2]))[16])
    ang = np.arctan2(v[band, 1], v[band, 0])
    order = band[np.argsort(ang)]
    if half:
        order = order[np.sort(ang) <= np.sort(ang)[0] + np.pi + 1e-12]
    return [(leaf, int(i)) for i in order]


def lift_path(source: NormalNeck, target: NormalNeck, start_pair, path, step_factor=4.0):
    """Nearest-image continuation of a vertex path of `source` into `target`
    coordinates, with the vertical drift of the lift."""
    (kt, vt), (ks, vs) = start_pair
    p_t = target.foliation[kt].positions[vt]
    p_s = source.foliation[ks].positions[vs]
    if np.linalg.norm(p_t - p_s) > MATCH_TOL * target.graph.scale:
        raise NoOverlap("start points do not have the same image")
    pts = np.array([source.foliation[k].positions[v] for k, v in path])
    src_om = np.array([source.foliation[k].G[v] for k, v in path])
    src_z = np.array([source.foliation[k].label for k, _ in path])
    om, z, inside = neck_coordinates(target, pts)
    if not np.all(inside):
        raise LiftExitsCylinder(f"lift leaves the target at step {int(np.argmin(inside))}")
    start_om, start_z = target.foliation[kt].G[vt], target.foliation[kt].label
    prev_om, prev_z = start_om, start_z
    prev_src = (src_om[0], src_z[0])
    for i in range(len(path)):
        src_step = np.linalg.norm(src_om[i] - prev_src[0]) + abs(src_z[i] - prev_src[1])
        jump = np.linalg.norm(om[i] - prev_om) + abs(z[i] - prev_z)
        if jump > step_factor * src_step + 1e-7:
            raise AmbiguousLift(f"lift jumps at step {i}")
        prev_om, prev_z, prev_src = om[i], z[i], (src_om[i], src_z[i])
    drift = float(np.max(np.abs(np.abs(z - z[0]) - np.abs(src_z - src_z[0]))))
    return LiftResult(om, z, drift, len(path))


def _bfs_lift(source, target, leaf_s):
    """Lift the whole leaf `leaf_s` of source along a BFS spanning tree of the
    grid; returns the lifted sphere coordinates."""
    mesh = source.graph.sphere_mesh
    nbrs = mesh.neighbors
    lf = source.foliation[leaf_s]
    om_all, z_all, inside = neck_coordinates(target, lf.positions)
    if not np.all(inside):
        raise LiftExitsCylinder("overlap leaf is not inside the target")
    seen = np.zeros(mesh.n_vertices, bool)
    seen[0] = True
    queue = deque([0])
    h = np.max(np.linalg.norm(mesh.vertices[mesh.edges[:, 0]] - mesh.vertices[mesh.edges[:, 1]],
                              axis=1))
    while queue:
        v = queue.popleft()
        for w in nbrs[v]:
            if seen[w]:
                continue
            seen[w] = True
            jump = np.linalg.norm(om_all[w] - om_all[v]) + abs(z_all[w] - z_all[v])
            if jump > 4 * h:
                raise AmbiguousLift("non-local correspondence between overlap leaves")
            queue.append(w)
    return om_all, z_all


# ---- merging ----------------------------------------------------------------------

def _merge_graphs(g1: CylinderGraph, g2: CylinderGraph):
    if g1.sphere_mesh.n_vertices != g2.sphere_mesh.n_vertices or \
            np.max(np.abs(g1.sphere_mesh.vertices - g2.sphere_mesh.vertices)) > 1e-12:
        raise InputError("necks use different sphere grids")
    if abs(g1.scale - g2.scale) > 1e-12 * g1.scale:
        raise InputError("necks use different scales")
    h = np.concatenate([g1.heights, g2.heights])
    u = np.concatenate([g1.u, g2.u])
    order = np.argsort(h, kind="stable")
    h, u = h[order], u[order]
    keep = np.concatenate([[True], np.diff(h) > 1e-9 * max(1.0, np.ptp(h))])
    return CylinderGraph(float(min(g1.a, g2.a)), float(max(g1.b, g2.b)), g1.sphere_mesh,
                         h[keep], u[keep], g1.scale, g1.n)


def merge_necks(neck1: NormalNeck, neck2: NormalNeck, delta=0.0, tol=MATCH_TOL, certify=True):
    """Union of two overlapping normal necks in neck1's coordinates; returns
    (merged, F1, F2) with neck_i = merged o F_i."""
    lab1 = np.asarray(neck1.z_coordinate)
    pos, _, _ = _samples(neck2)
    _, z1, inside = neck_coordinates(neck1, pos)
    deep = inside & (z1 >= lab1[0] + delta - 1e-12) & (z1 <= lab1[-1] - delta + 1e-12)
    if not np.any(deep):
        raise NoOverlap("no point of neck1 at distance delta from its ends lies in neck2")
    k2 = [k for k, lf in enumerate(neck2.foliation)
          if np.all(neck_coordinates(neck1, lf.positions)[2])]
    if k2:
        _bfs_lift(neck2, neck1, k2[len(k2) // 2])
    try:
        F, _ = fit_isometry(neck1, neck2, tol=tol)
    except ResidualTooLarge as exc:
        raise OrientationIncompatible(str(exc)) from exc
    moved = reparametrize(neck2, F.inverse())
    lab2 = np.asarray(moved.z_coordinate)
    eps = 1e-9 * max(1.0, np.ptp(lab1))
    before = [i for i, z in enumerate(lab2) if z < lab1[0] - eps]
    after = [i for i, z in enumerate(lab2) if z > lab1[-1] + eps]
    leaves = ([moved.foliation[i] for i in before] + list(neck1.foliation)
              + [moved.foliation[i] for i in after])
    labels = np.concatenate([lab2[before], lab1, lab2[after]])
    log = ([moved.rotation_log[i] for i in before] + list(neck1.rotation_log)
           + [moved.rotation_log[i] for i in after])
    graph = _merge_graphs(neck1.graph, neck2.graph)
    merged = NormalNeck(graph, leaves, labels, log, dict(neck1.tolerances))
    if certify:
        cert = certify_normal(merged)
        if not cert.passed:
            raise CertificationFailure(f"merged neck fails {cert.failing()}", merged)
    return merged, CylinderIsometry.identity(), F


# ---- ambient data and maximal extension --------------------------------------------

@dataclass
class ProfileAmbient:
    """A rotationally symmetric hypersurface seen on a lattice of heights.

    Periodic profiles are unrolled along the axis; `twist` identifies
    (p, x + period) with (twist p, x), so the quotient may carry a rotation or
    reflection of the sphere factor.
    """

    profile: RadialProfile
    scale: float
    spacing: float
    origin: float
    level: int = 3
    twist: np.ndarray | None = None

    def __post_init__(self):
        self.mesh = icosphere(self.level)
        self._spl = self.profile.radius_spline()

    @property
    def period(self):
        return self.profile.period if self.profile.periodic else None

    def x(self, j):
        return self.origin + np.asarray(j) * self.spacing

    def in_domain(self, j):
        if self.profile.periodic:
            return True
        x = self.profile.axis_samples
        return bool(x[0] < self.x(j) < x[-1])

    def window(self, j0, j1, pad=0):
        """Graph on lattice points j0 - pad .. j1 + pad."""
        if not (self.in_domain(j0) and self.in_domain(j1)):
            raise CertificationFailure("window leaves the ambient data", None)
        if not self.profile.periodic:
            x = self.profile.axis_samples
            pad = min(pad, int((self.x(j0) - x[0]) / self.spacing) - 1,
                      int((x[-1] - self.x(j1)) / self.spacing) - 1)
            pad = max(pad, 0)
        js = np.arange(j0 - pad, j1 + pad + 1)
        x = self.x(js)
        r = self._spl(x)
        if np.any(r <= 0):
            raise CertificationFailure("window reaches the axis", None)
        u = np.repeat((r - self.scale)[:, None], self.mesh.n_vertices, axis=1)
        return CylinderGraph(float(x[0] / self.scale), float(x[-1] / self.scale), self.mesh,
                             x / self.scale, u, self.scale)

    def canonical(self, points, start=None):
        """Representatives of ambient points in the fundamental domain
        [start, start + period) (default start: the lattice origin)."""
        P = np.array(points, dtype=float)
        if self.period is None:
            return P
        x = P[:, 3]
        start = self.origin if start is None else start
        j = np.floor((x - start) / self.period).astype(int)
        P[:, 3] = x - j * self.period
        if self.twist is not None:
            for jj in np.unique(j):
                sel = j == jj
                T = np.linalg.matrix_power(self.twist, int(jj)) if jj >= 0 else \
                    np.linalg.matrix_power(self.twist.T, int(-jj))
                P[sel, :3] = P[sel, :3] @ T.T
        return P

    def lattice_index(self, z):
        return int(round((z * self.scale - self.origin) / self.spacing))


@dataclass
class MaximalNeckResult:
    kind: str
    neck: NormalNeck
    period: float | None = None
    deck_isometry: CylinderIsometry | None = None
    label_period: float | None = None
    ends: tuple = (None, None)
    end_reasons: tuple = ("", "")
    ends_capped: tuple = (False, False)

    def to_dict(self):
        d = {"kind": self.kind, "length": self.neck.length, "ends": list(self.ends),
             "end_reasons": list(self.end_reasons), "ends_capped": list(self.ends_capped)}
        if self.kind == "Periodic":
            d.update(period=self.period, label_period=self.label_period,
                     deck_isometry=self.deck_isometry.to_dict())
        return d


WINDOW_PAD = 8


def _window_neck(ambient, j0, j1, params, tolerances):
    # padding keeps spline end effects away from the leaves, so windows agree
    # with any larger graph built from the same data
    graph = ambient.window(j0, j1, WINDOW_PAD)
    if params is not None:
        cert = is_hypersurface_neck(ambient.window(j0, j1), params)
        if not cert.passed:
            raise CertificationFailure(f"window {j0}..{j1} is not a neck: "
                                       f"{[k for k, v in cert.flags.items() if not v]}", None)
    try:
        neck = build_normal_neck(graph, tolerances, leaf_heights=ambient.x(np.arange(j0, j1 + 1))
                                 / ambient.scale)
    except NeckflowError as exc:
        raise CertificationFailure(f"normal neck construction failed: {exc}", None) from exc
    return neck


def _end_step(neck, ambient):
    rhat = min(neck.foliation[0].mean_radius, neck.foliation[-1].mean_radius)
    return max(2, int(round(rhat / ambient.spacing)))


def extend_once(neck: NormalNeck, ambient: ProfileAmbient, side, params=None, tolerances=None):
    """Extend one end by one r_hat unit; CertificationFailure when the ambient
    data stops being a neck there."""
    step = _end_step(neck, ambient)
    if side == "right":
        j_end = ambient.lattice_index(neck.foliation[-1].z)
        j0, j1 = j_end - 2 * step, j_end + step
    else:
        j_end = ambient.lattice_index(neck.foliation[0].z)
        j0, j1 = j_end - step, j_end + 2 * step
    window = _window_neck(ambient, j0, j1, params, tolerances or neck.tolerances)
    cert = certify_normal(window)
    if not cert.passed:
        raise CertificationFailure(f"extension window fails {cert.failing()}", window)
    merged, _, _ = merge_necks(neck, window)
    return merged


def _repetition(neck: NormalNeck, ambient: ProfileAmbient, k, tol):
    """Mismatch between the canonical image of leaf k and the first leaf."""
    first = neck.foliation[0]
    q = ambient.canonical(neck.foliation[k].positions,
                          first.z * ambient.scale - 0.5 * ambient.spacing)
    if abs(np.mean(q[:, 3]) - np.mean(first.positions[:, 3])) > 10 * tol * ambient.scale + \
            ambient.spacing:
        return np.inf, None
    mesh = neck.graph.sphere_mesh
    f, bary = mesh.locate(q[:, :3])
    idx = mesh.faces[f]
    h0 = np.einsum("nk,nk->n", bary, first.heights[idx]) * ambient.scale
    rho0 = np.einsum("nk,nk->n", bary, np.linalg.norm(first.positions[idx, :3], axis=2))
    mis = max(float(np.max(np.abs(q[:, 3] - h0))),
              float(np.max(np.abs(np.linalg.norm(q[:, :3], axis=1) - rho0))))
    g0 = np.einsum("nk,nkd->nd", bary, np.asarray(first.G)[idx])
    g0 /= np.linalg.norm(g0, axis=1)[:, None]
    return mis, g0


def extend_maximal(neck: NormalNeck, ambient: ProfileAmbient, params=None, max_steps=64,
                   tol=MATCH_TOL):
    """Extend both ends until the data leaves the neck regime (Finite) or the
    neck closes up on itself (Periodic)."""
    if neck.length < 3 * min(lf.mean_radius for lf in neck.foliation) / ambient.scale - 1e-9:
        raise InputError("neck too short to extend (need length at least 3 delta)")
    reasons = ["", ""]
    done = [False, False]
    for _ in range(max_steps):
        if all(done):
            break
        for i, side in enumerate(("left", "right")):
            if done[i]:
                continue
            try:
                neck = extend_once(neck, ambient, side, params)
            except CertificationFailure as exc:
                done[i], reasons[i] = True, str(exc)
                continue
            if ambient.period is not None and side == "right":
                for k in range(1, len(neck.foliation)):
                    mis, g0 = _repetition(neck, ambient, k, tol)
                    if mis <= tol * ambient.scale:
                        return _periodic_result(neck, ambient, k, g0)
    else:
        raise CertificationFailure("maximal extension did not terminate", neck)
    lo = neck.foliation[0].z * ambient.scale
    hi = neck.foliation[-1].z * ambient.scale
    return MaximalNeckResult("Finite", neck, ends=(float(lo), float(hi)),
                             end_reasons=tuple(reasons))


def _periodic_result(neck, ambient, k, g0):
    fund = restrict(neck, 0, k)
    D = orthogonal_procrustes(np.asarray(neck.foliation[k].G), g0)
    label_period = float(neck.z_coordinate[k] - neck.z_coordinate[0])
    period = float((neck.foliation[k].z - neck.foliation[0].z) * ambient.scale)
    deck = CylinderIsometry(D.T, label_period, False)
    x0 = neck.foliation[0].z * ambient.scale
    return MaximalNeckResult("Periodic", fund, period, deck, label_period,
                             ends=(float(x0), float(x0 + period)))


def profile_ambient(profile: RadialProfile, center=None, level=3, twist=None, spacing=0.1):
    lam_a, lam_r, H, _ = curvature_field(profile, 0)
    if center is None:
        r = np.where(profile.radius > 0, profile.radius, np.inf)
        center = int(np.argmin(r))
    rhat = (profile.n - 1) / H[center]
    xc = profile.axis_samples[center]
    if profile.periodic:
        N = int(np.ceil(profile.period / (spacing * rhat)))
        dx = profile.period / N
    else:
        dx = spacing * rhat
    return ProfileAmbient(profile, float(rhat), float(dx), float(xc), level, twist)


def extend_maximal_profile(profile: RadialProfile, center=None, level=2, twist=None,
                           params=None, spacing=0.1) -> MaximalNeckResult:
    """Build a normal neck around `center` (default: thinnest point) and extend
    it maximally inside the profile."""
    amb = profile_ambient(profile, center, level, twist, spacing)
    params = params if params is not None else NeckParams(epsilon=0.1, k=1)
    step = max(2, int(round(1.0 / spacing)))
    neck = _window_neck(amb, -2 * step, 2 * step, params, None)
    cert = certify_normal(neck)
    if not cert.passed:
        raise CertificationFailure(f"initial neck fails {cert.failing()}", neck)
    return extend_maximal(neck, amb, params)


def classify_gluing(result: MaximalNeckResult, capped_ends=None):
    """TubeS1 / TwistedQuotient for periodic results, Sphere for finite necks
    closed by two convex caps."""
    if result.kind == "Periodic":
        return "TubeS1" if result.deck_isometry.orientation_preserving else "TwistedQuotient"
    capped = result.ends_capped if capped_ends is None else capped_ends
    if tuple(capped) == (True, True):
        return "Sphere"
    raise IncompleteData("finite neck without caps at both ends")
