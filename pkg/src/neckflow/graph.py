"""Height fields over the standard cylinder S^2 x [a, b] and their geometry.

A graph stores u(vertex, z) over a triangulated unit sphere.  Its embedding
in R^4 is X(w, z) = ((scale + u) w, scale * z), so heights are measured in
units of the reference radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateMetric, HeightOutOfRange, NonPositiveH, WindowExceedsDomain
from .profile import RadialProfile, curvature_field
from .sphere_mesh import SphereMesh, apply_gradient, icosphere

SIGMA2 = 4.0 * np.pi


@dataclass(frozen=True, eq=False)
class CylinderGraph:
    a: float
    b: float
    sphere_mesh: SphereMesh
    heights: np.ndarray
    u: np.ndarray
    scale: float = 1.0
    n: int = 3
    u_norm: float | None = None

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=float)
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "u", u)
        if self.n != 3:
            raise ValueError("only n = 3 (two-sphere cross-sections) is supported")
        if not self.a < self.b:
            raise ValueError("need a < b")
        if h.ndim != 1 or len(h) < 2 or not np.all(np.diff(h) > 0):
            raise ValueError("heights must be strictly increasing")
        if u.shape != (len(h), self.sphere_mesh.n_vertices):
            raise ValueError(f"u must have shape (n_heights, n_vertices), got {u.shape}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not np.all(np.isfinite(u)):
            raise ValueError("u must be finite")

    @property
    def n_heights(self):
        return len(self.heights)

    def is_embedded(self):
        return float(np.abs(self.u).max()) < 0.5 * self.scale

    def scaled(self, c):
        return CylinderGraph(self.a, self.b, self.sphere_mesh, self.heights, self.u * c,
                             self.scale * c, self.n,
                             None if self.u_norm is None else self.u_norm * c)

    @cached_property
    def _z_spline(self):
        return CubicSpline(self.heights, self.u, axis=0)

    def u_at(self, z, nu=0):
        """u and its z-derivatives at arbitrary heights (cubic spline in z)."""
        return self._z_spline(z, nu)

    def radii(self):
        return self.scale + self.u


@dataclass(frozen=True, eq=False)
class CrossSection:
    z: float
    embedded_positions: np.ndarray
    faces: np.ndarray
    induced_metric: np.ndarray
    area: float
    reference: SphereMesh | None = field(default=None, repr=False)


def reference_frames(mesh: SphereMesh):
    """Orthonormal frame (F, 3, 2) of each flat reference triangle and the
    reference edge matrix B (F, 2, 2) expressed in that frame."""
    v, f = mesh.vertices, mesh.faces
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    t1 = e1 / np.linalg.norm(e1, axis=1)[:, None]
    nrm = np.cross(e1, e2)
    t2 = np.cross(nrm / np.linalg.norm(nrm, axis=1)[:, None], t1)
    frame = np.stack([t1, t2], axis=2)
    E = np.stack([e1, e2], axis=2)
    B = np.einsum("fdi,fdj->fij", frame, E)
    return frame, B


def induced_metric(positions, mesh: SphereMesh):
    """Per-triangle first fundamental form in the reference chart."""
    f = mesh.faces
    _, B = _frames(mesh)
    E = np.stack([positions[f[:, 1]] - positions[f[:, 0]],
                  positions[f[:, 2]] - positions[f[:, 0]]], axis=2)
    J = E @ np.linalg.inv(B)
    return np.einsum("fdi,fdj->fij", J, J)


_FRAME_CACHE: dict = {}


def _frames(mesh):
    key = id(mesh)
    hit = _FRAME_CACHE.get(key)
    if hit is None or hit[0] is not mesh:
        hit = (mesh, reference_frames(mesh))
        _FRAME_CACHE[key] = hit
    return hit[1]


def section_from_positions(z, positions, mesh: SphereMesh):
    """Build a CrossSection; area uses the curved-triangle correction so round
    spheres integrate exactly."""
    G = induced_metric(positions, mesh)
    det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2
    if not np.all(np.isfinite(det)) or det.min() <= 1e-14 * np.abs(G).max() ** 2:
        raise DegenerateMetric("a triangle of the cross-section has degenerated")
    area = float(np.sum(np.sqrt(det) * mesh.spherical_face_areas))
    return CrossSection(float(z), np.asarray(positions), mesh.faces, G, area, mesh)


def _height_index(graph: CylinderGraph, z):
    h = graph.heights
    tol = 1e-9 * (graph.b - graph.a)
    if not (h[0] - tol <= z <= h[-1] + tol):
        raise HeightOutOfRange(f"z = {z} outside [{h[0]}, {h[-1]}]")
    return int(np.argmin(np.abs(h - z)))


def graph_cross_section(graph: CylinderGraph, z) -> CrossSection:
    j = _height_index(graph, z)
    mesh = graph.sphere_mesh
    pos = (graph.scale + graph.u[j])[:, None] * mesh.vertices
    return section_from_positions(graph.heights[j], pos, mesh)


def mean_radius(section: CrossSection, n=3):
    if section.area <= 0:
        raise ValueError("section area must be positive")
    sigma = 2 * np.pi ** (n / 2) / _gamma(n / 2)
    return float((section.area / sigma) ** (1.0 / (n - 1)))


def _gamma(x):
    from math import gamma
    return gamma(x)


def mean_radii(graph: CylinderGraph):
    return np.array([mean_radius(graph_cross_section(graph, z)) for z in graph.heights])


# ---- derivative proxies -----------------------------------------------------

def derivative_norms_pointwise(field, mesh, dz, radius, k):
    """|D^j field| per vertex for j = 1..k, shape (H, V, k).

    field: (H, V, c) tensor components.  Angular derivatives use the vertex
    gradient on the unit sphere divided by `radius` (H,); z derivatives use
    second-order differences with spacing `dz` (H-1,) or scalar.  Every
    ordering of angular and axial derivatives is included.
    """
    Gop = mesh.gradient_operator
    nh, nv = field.shape[:2]
    zcoord = np.concatenate([[0.0], np.cumsum(np.broadcast_to(dz, (nh - 1,)))])
    radius = np.asarray(radius, dtype=float).reshape(nh, 1, 1)
    out = np.zeros((nh, nv, k))
    current = [field]
    for j in range(k):
        nxt = []
        for f in current:
            flat = np.moveaxis(f, 1, 0).reshape(nv, -1)
            g = apply_gradient(Gop, flat).reshape(nv, 3, nh, -1)
            nxt.append(np.moveaxis(g, 2, 0).reshape(nh, nv, -1) / radius)
            nxt.append(np.gradient(f, zcoord, axis=0, edge_order=2) if nh >= 3
                       else np.zeros_like(f))
        current = nxt
        out[..., j] = np.sqrt(sum(np.sum(f ** 2, axis=2) for f in current))
    return out


def derivative_norms(field, mesh: SphereMesh, dz, radius, k):
    """max over vertices of |D^j field| for j = 1..k, shape (H, k)."""
    return derivative_norms_pointwise(field, mesh, dz, radius, k).max(axis=1)


def _metric_deviation_fields(graph: CylinderGraph, radii):
    """Per-face deviation tensors (H, F, 3, 3) extrinsic, mixed vectors (H, F, 3)."""
    mesh = graph.sphere_mesh
    frame, _ = _frames(mesh)
    f = mesh.faces
    uz = graph.u_at(graph.heights, 1)
    s = graph.scale
    grad_u = apply_gradient(mesh.gradient_operator, graph.u.T)  # (V, 3, H)
    dev_tensors, mixed = [], []
    for j in range(graph.n_heights):
        pos = (s + graph.u[j])[:, None] * mesh.vertices
        G = induced_metric(pos, mesh)
        det = G[:, 0, 0] * G[:, 1, 1] - G[:, 0, 1] ** 2
        if not np.all(np.isfinite(det)) or det.min() <= 1e-14 * s ** 4:
            raise DegenerateMetric(f"degenerate triangle at height index {j}")
        D = G / radii[j] ** 2 - np.eye(2)
        dev_tensors.append(np.einsum("fai,fij,fbj->fab", frame, D, frame))
        gf = grad_u[:, :, j][f].mean(axis=1)
        uzf = uz[j][f].mean(axis=1)
        mixed.append((uzf / (radii[j] * np.sqrt(s ** 2 + uzf ** 2)))[:, None] * gf)
    return np.array(dev_tensors), np.array(mixed)


def _faces_to_vertices(mesh, values):
    """Area-weighted average of per-face data (H, F, ...) onto vertices."""
    f = mesh.faces
    w = mesh.spherical_face_areas
    shape = values.shape
    out = np.zeros((shape[0], mesh.n_vertices) + shape[2:])
    tot = np.zeros(mesh.n_vertices)
    wv = values * w.reshape((1, -1) + (1,) * (len(shape) - 2))
    for c in range(3):
        np.add.at(out, (slice(None), f[:, c]), wv)
        np.add.at(tot, f[:, c], w)
    return out / tot.reshape((1, -1) + (1,) * (len(shape) - 2))


def conformal_deviation(graph: CylinderGraph, k=1):
    """Per height: (sup |g_hat - g_bar|, max_{j<=k} sup |D^j g_hat|).

    g_hat = r(z)^-2 g.  The angular block and the angular/axial mixed block
    are compared with the standard cylinder; the axial-axial entry depends on
    the choice of height coordinate and is left to the volume calibration.
    """
    radii = mean_radii(graph)
    dev_t, mix = _metric_deviation_fields(graph, radii)
    per_face = np.sqrt(np.sum(dev_t ** 2, axis=(2, 3)) + 2 * np.sum(mix ** 2, axis=2))
    sup = per_face.max(axis=1)
    if k < 1:
        return [(float(d), 0.0) for d in sup]
    mesh = graph.sphere_mesh
    comp = np.concatenate([dev_t.reshape(*dev_t.shape[:2], 9), np.sqrt(2) * mix], axis=2)
    vfield = _faces_to_vertices(mesh, comp)
    dz = np.diff(graph.heights) * graph.scale / np.mean(radii)
    dn = derivative_norms(vfield, mesh, dz, np.ones(graph.n_heights), k)
    return [(float(d), float(np.max(row))) for d, row in zip(sup, dn)]


# ---- shape operator of the graph hypersurface -------------------------------

def graph_weingarten(graph: CylinderGraph, k=0):
    """Principal curvatures (H, V, 3) sorted, and |nabla^l W| (H, V, k).

    The hypersurface is the zero set of F(y, w) = |y| - rho(y/|y|, w/scale);
    W = P Hess F P / |grad F| on its tangent space, with outward normal.
    """
    mesh = graph.sphere_mesh
    Gop = mesh.gradient_operator
    s = graph.scale
    om = mesh.vertices
    nh, nv = graph.n_heights, mesh.n_vertices
    u = graph.u
    uz = graph.u_at(graph.heights, 1) / s
    uzz = graph.u_at(graph.heights, 2) / s ** 2
    rho = s + u
    gu = apply_gradient(Gop, u.T)  # (V, 3, H)
    guz = apply_gradient(Gop, uz.T)
    hu = apply_gradient(Gop, gu.reshape(nv, -1)).reshape(nv, 3, 3, nh)  # d_a (grad u)_b
    P = np.eye(3)[None] - om[:, :, None] * om[:, None, :]
    gu = np.moveaxis(gu, 2, 0)  # (H, V, 3)
    guz = np.moveaxis(guz, 2, 0)
    hu = np.moveaxis(hu, 3, 0)  # (H, V, 3, 3) index [.., a, b]
    hs = np.einsum("vai,hvij,vjb->hvab", P, hu, P)
    hs = 0.5 * (hs + np.swapaxes(hs, 2, 3))
    outer = np.einsum("va,hvb->hvab", om, gu)
    hf = (hs - outer - np.swapaxes(outer, 2, 3)) / rho[..., None, None] ** 2
    Hess = np.zeros((nh, nv, 4, 4))
    Hess[..., :3, :3] = P[None] / rho[..., None, None] - hf
    Hess[..., :3, 3] = -guz / rho[..., None]
    Hess[..., 3, :3] = Hess[..., :3, 3]
    Hess[..., 3, 3] = -uzz
    grad = np.concatenate([om[None] - gu / rho[..., None], -uz[..., None]], axis=2)
    gnorm = np.linalg.norm(grad, axis=2)
    N = grad / gnorm[..., None]
    Pt = np.eye(4) - N[..., :, None] * N[..., None, :]
    Wm = Pt @ Hess @ Pt / gnorm[..., None, None]
    ev, evec = np.linalg.eigh(Wm)
    align = np.abs(np.einsum("hvdk,hvd->hvk", evec, N))
    drop = np.argmax(align, axis=2)
    keep = np.ones(ev.shape, dtype=bool)
    np.put_along_axis(keep, drop[..., None], False, axis=2)
    eig = ev[keep].reshape(nh, nv, 3)
    if k < 1:
        return eig, np.zeros((nh, nv, 0)), Wm
    # subtract the round cylinder operator of radius `scale` so that the
    # ambient components of the frame do not masquerade as curvature change
    bar = np.zeros((nv, 4, 4))
    bar[:, :3, :3] = P / s
    field = (Wm - bar[None]).reshape(nh, nv, 16)
    radii_amb = rho.mean(axis=1)
    dn = derivative_norms_pointwise(field, mesh, np.diff(graph.heights) * s, radii_amb, k)
    return eig, dn, Wm


# ---- norms and extraction ---------------------------------------------------

def graph_ck_norm(graph: CylinderGraph, order):
    """Max over discrete difference quotients of u up to `order` (mesh
    directions and heights), in units of scale."""
    s = graph.scale
    field = (graph.u / s)[..., None]
    base = float(np.abs(field).max())
    if order < 1:
        return base
    dn = derivative_norms(field, graph.sphere_mesh, np.diff(graph.heights),
                          np.ones(graph.n_heights), order)
    return max(base, float(dn.max()))


def extract_graph(profile: RadialProfile, center, L, n_heights=33, level=3, k=2) -> CylinderGraph:
    """Rescale so r_hat(center) = 1 and express the window |x - x_c| <= L r_hat
    as a rotationally symmetric graph over the unit cylinder."""
    lam_a, lam_r, H, _ = curvature_field(profile, 0)
    Hc = H[center]
    if not np.isfinite(Hc) or Hc <= 0:
        raise NonPositiveH(f"H = {Hc} at the window centre")
    rhat = (profile.n - 1) / Hc
    x = profile.axis_samples
    xc = x[center]
    lo, hi = xc - L * rhat, xc + L * rhat
    if not profile.periodic:
        if lo < x[0] or hi > x[-1]:
            raise WindowExceedsDomain("graph window leaves the profile domain")
        inside = (x >= lo) & (x <= hi)
    else:
        if hi - lo >= profile.period:
            raise WindowExceedsDomain("graph window wraps the whole period")
        d = (x - xc + 0.5 * profile.period) % profile.period - 0.5 * profile.period
        inside = np.abs(d) <= L * rhat
    if np.any(H[inside] <= 0) or np.any(~np.isfinite(H[inside])):
        raise NonPositiveH("mean curvature not positive across the window")
    z = np.linspace(-L, L, n_heights)
    r = profile.radius_spline()(xc + z * rhat) / rhat
    mesh = icosphere(level)
    u = np.repeat((r - 1.0)[:, None], mesh.n_vertices, axis=1)
    g = CylinderGraph(-float(L), float(L), mesh, z, u, 1.0)
    return CylinderGraph(g.a, g.b, mesh, z, u, 1.0, 3, graph_ck_norm(g, k + 2))
