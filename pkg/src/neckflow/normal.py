"""Normal parametrizations of geometric necks.

Leaves are height graphs z = z_k + phi(w) over the fixed sphere grid of a
CylinderGraph.  Each leaf carries a map G from its vertices to the unit
sphere (the inverse of the sphere-to-leaf parametrization, which is
harmonic exactly when G is: in two dimensions both are conformal), a
volume-calibrated height label, and the rotation applied during alignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import gamma, pi

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.optimize import root
from scipy.sparse.linalg import splu

from .errors import (AlignmentSingularity, DegenerateLeaf, FoliationCollision, NewtonDivergence,
                     NonConvergence, NonMonotoneRelabeling)
from .graph import CrossSection, CylinderGraph, section_from_positions
from .sphere_mesh import (apply_gradient, cotan_weights, laplacian_from_weights,
                          spherical_triangle_areas, surface_gradient_operator, triangle_areas)

CONDITIONS = ("cmc", "harmonic", "com", "volume", "killing")
DEFAULT_TOLERANCES = {name: 1e-8 for name in CONDITIONS}


def sphere_volume_constant(n):
    """Volume of the unit (n-1)-sphere."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return 2 * pi ** (n / 2) / gamma(n / 2)


# ---- evaluation of the graph along per-vertex heights ----------------------------

class GraphSampler:
    """u, u_z and the angular gradient of u at one height per vertex."""

    def __init__(self, graph: CylinderGraph):
        self.graph = graph
        mesh = graph.sphere_mesh
        self.h = graph.heights
        self.spl = CubicSpline(self.h, graph.u, axis=0)
        grad = apply_gradient(mesh.gradient_operator, graph.u.T)  # (V, 3, H)
        self.gspl = CubicSpline(self.h, np.moveaxis(grad, 2, 0).reshape(len(self.h), -1), axis=0)

    @staticmethod
    def _eval(spl, z, cols, nu):
        x = spl.x
        i = np.clip(np.searchsorted(x, z) - 1, 0, len(x) - 2)
        t = z - x[i]
        c = spl.c[:, i, cols]
        if nu == 0:
            return ((c[0] * t + c[1]) * t + c[2]) * t + c[3]
        if nu == 1:
            return (3 * c[0] * t + 2 * c[1]) * t + c[2]
        return 6 * c[0] * t + 2 * c[1]

    def u(self, z, nu=0):
        return self._eval(self.spl, z, np.arange(len(z)), nu)

    def grad(self, z):
        nv = len(z)
        cols = (np.arange(nv)[:, None] * 3 + np.arange(3)[None, :]).ravel()
        zz = np.repeat(z, 3)
        return self._eval(self.gspl, zz, cols, 0).reshape(nv, 3)


def leaf_geometry(graph: CylinderGraph, sampler: GraphSampler, zv):
    """Positions (V, 4) and unit normal U (V, 4) of the leaf z = zv(w) inside M."""
    mesh = graph.sphere_mesh
    s = graph.scale
    om = mesh.vertices
    u = sampler.u(zv)
    rho = s + u
    pos = np.concatenate([rho[:, None] * om, (s * zv)[:, None]], axis=1)
    uz = sampler.u(zv, 1) / s
    gu = sampler.grad(zv)
    nu = np.concatenate([om - gu / rho[:, None], -uz[:, None]], axis=1)
    nu /= np.linalg.norm(nu, axis=1)[:, None]
    gh = apply_gradient(mesh.gradient_operator, zv)  # (V, 3), tangential
    w = np.concatenate([-s * gh / rho[:, None], np.ones((len(zv), 1))], axis=1)
    w -= np.sum(w * nu, axis=1)[:, None] * nu
    U = w / np.linalg.norm(w, axis=1)[:, None]
    return pos, U


def vertex_areas(pos, faces, nv):
    a = triangle_areas(pos, faces)
    out = np.zeros(nv)
    for k in range(3):
        np.add.at(out, faces[:, k], a / 3.0)
    return out


def leaf_mean_curvature(pos, U, mesh):
    """Discrete mean curvature of the leaf inside M along U at every vertex.

    With the area gradient dA_i = L_w P_i and the radial moment
    A_i = (1/2) <dA_i, (rho_i w_i, 0)> (these sum to the area on round
    sections), H_i = <dA_i, U_i> / A_i is exact on round cross-sections of
    rotational graphs.
    """
    w = cotan_weights(pos, mesh.faces, mesh.face_edges, len(mesh.edges))
    L = laplacian_from_weights(mesh.edges, w, mesh.n_vertices)
    dA = L @ pos
    radial = pos.copy()
    radial[:, 3] = 0.0
    Ai = 0.5 * np.sum(dA * radial, axis=1)
    if np.any(Ai <= 0):
        raise DegenerateLeaf("non-positive vertex area moment")
    return np.sum(dA * U, axis=1) / Ai, L, Ai


# ---- CMC foliation ------------------------------------------------------------

@dataclass(eq=False)
class Leaf:
    z: float
    phi: np.ndarray
    positions: np.ndarray
    normals: np.ndarray
    H_values: np.ndarray
    section: CrossSection
    G: np.ndarray | None = None
    label: float | None = None
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    energies: list = field(default_factory=list)
    newton_steps: int = 0

    @property
    def H(self):
        return float(np.mean(self.H_values))

    @property
    def heights(self):
        return self.z + self.phi

    @property
    def mean_radius(self):
        return float(np.sqrt(self.section.area / (4 * pi)))


def _make_leaf(graph, sampler, z, phi, H=None, steps=0):
    mesh = graph.sphere_mesh
    pos, U = leaf_geometry(graph, sampler, z + phi)
    if H is None:
        H, _, _ = leaf_mean_curvature(pos, U, mesh)
    sec = section_from_positions(z, pos, mesh)
    return Leaf(float(z), phi, pos, U, H, sec, newton_steps=steps)


def cmc_leaf(graph: CylinderGraph, z, tol=1e-8, max_steps=30, sampler=None):
    """Newton iteration for one CMC leaf at mean height z (the constant is the
    area-weighted mean of H and is updated each step)."""
    sampler = sampler or GraphSampler(graph)
    mesh = graph.sphere_mesh
    nv = mesh.n_vertices
    wts = mesh.vertex_weights
    phi = np.zeros(nv)
    solver = None
    spread_prev = np.inf
    for it in range(max_steps + 1):
        pos, U = leaf_geometry(graph, sampler, z + phi)
        H, L, Ai = leaf_mean_curvature(pos, U, mesh)
        r = float(np.sqrt(np.sum(Ai) / (4 * pi)))
        spread = float(np.ptp(H)) * r
        if spread <= tol:
            sec = section_from_positions(z, pos, mesh)
            return Leaf(float(z), phi, pos, U, H, sec, newton_steps=it)
        if not np.isfinite(spread) or (it > 3 and spread > 10 * spread_prev):
            raise NewtonDivergence(f"CMC iteration diverged at z = {z}")
        spread_prev = spread
        if solver is None:
            # H decreases under upward normal motion: dH ~ -D^-1 L / <dX/dz, U>
            s = graph.scale
            dz_dot_u = s * U[:, 3] + np.sum(pos[:, :3] / np.linalg.norm(pos[:, :3], axis=1)[:, None]
                                            * U[:, :3], axis=1) * sampler.u(z + phi, 1)
            J = (sp.diags(1.0 / Ai) @ L @ sp.diags(dz_dot_u)).tocsc()
            # small shift removes the one-dimensional kernel
            Jreg = (J + sp.diags(np.full(nv, 1e-6 / r ** 2))).tocsc()
            solver = splu(Jreg)
        Ha = np.sum(Ai * H) / np.sum(Ai)
        d = -solver.solve(H - Ha)
        d -= np.sum(wts * d) / np.sum(wts)
        phi = phi + d
    raise NewtonDivergence(f"CMC iteration did not converge at z = {z}")


def cmc_foliate(graph: CylinderGraph, tol=1e-8, heights=None, max_steps=30):
    heights = graph.heights if heights is None else np.asarray(heights)
    sampler = GraphSampler(graph)
    leaves = [cmc_leaf(graph, z, tol, max_steps, sampler) for z in heights]
    check_foliation(leaves)
    return leaves


def check_foliation(leaves):
    if len(leaves) > 1 and leaves[-1].z < leaves[0].z:
        leaves = leaves[::-1]
    for a, b in zip(leaves[:-1], leaves[1:]):
        if np.any(b.heights <= a.heights):
            raise FoliationCollision(f"leaves at z = {a.z} and z = {b.z} intersect")


# ---- harmonic maps to the sphere -----------------------------------------------

def mobius(a, x):
    """Conformal automorphism of the ball sending a to 0, applied to unit x."""
    a2 = a @ a
    xa = x - a
    num = (1 - a2) * xa - np.sum(xa * xa, axis=1)[:, None] * a
    den = 1 - 2 * (x @ a) + a2 * np.sum(x * x, axis=1)
    y = num / den[:, None]
    return y / np.linalg.norm(y, axis=1)[:, None]


def center_of_mass(G, A):
    return (A @ G) / A.sum()


def recenter(G, A, tol=1e-14):
    """Compose G with the Mobius map that puts the area-weighted centre of
    mass at the origin."""
    if np.linalg.norm(center_of_mass(G, A)) <= tol:
        return G
    sol = root(lambda a: center_of_mass(mobius(a, G), A), np.zeros(3), tol=1e-15)
    if np.linalg.norm(sol.x) >= 1:
        raise NonConvergence("centre-of-mass normalization failed")
    out = mobius(sol.x, G)
    if np.linalg.norm(center_of_mass(out, A)) > 1e-12:
        raise NonConvergence("centre-of-mass normalization failed")
    return out


@dataclass
class HarmonicInfo:
    energies: list
    residual: float
    iterations: int


def _leaf_operators(pos, mesh):
    try:
        w = cotan_weights(pos, mesh.faces, mesh.face_edges, len(mesh.edges))
    except FloatingPointError as exc:
        raise DegenerateLeaf(str(exc)) from exc
    w = w + mesh.balance_correction
    L = laplacian_from_weights(mesh.edges, w, mesh.n_vertices)
    A = vertex_areas(pos, mesh.faces, mesh.n_vertices)
    if np.any(A <= 0):
        raise DegenerateLeaf("zero-area vertex star")
    return L, A


def _tangent(G, V):
    return V - np.sum(V * G, axis=1)[:, None] * G


def _constrained(G, V, A):
    """Remove from tangent field V the part A_i P_i c that moves the centre of
    mass (least squares in c)."""
    P = np.eye(3)[None] - G[:, :, None] * G[:, None, :]
    M = np.einsum("i,ijk->jk", A ** 2, P)
    c = np.linalg.solve(M, np.einsum("i,ijk,ik->j", A, P, V))
    return V - A[:, None] * np.einsum("ijk,k->ij", P, c)


def _com_preserving(G, d, A):
    """Subtract a conformal gauge field P_i c so that sum A_i d_i = 0."""
    P = np.eye(3)[None] - G[:, :, None] * G[:, None, :]
    c = np.linalg.solve(np.einsum("i,ijk->jk", A, P), A @ d)
    return d - np.einsum("ijk,k->ij", P, c)


def harmonic_residual(G, L, A, R2):
    grad = L @ G
    r = _constrained(G, _tangent(G, grad), A)
    return float(np.max(np.linalg.norm(r, axis=1) / A) * R2)


def dirichlet_energy(G, L):
    return 0.5 * float(np.sum(G * (L @ G)))


def harmonic_reparametrize(leaf_positions, mesh, init=None, tol=1e-8, max_iter=300, mu=0.1,
                           return_info=False):
    """Discrete harmonic map from the leaf to the unit sphere, normalized so the
    leaf's centre of mass maps to the origin."""
    pos = np.asarray(leaf_positions)
    L, A = _leaf_operators(pos, mesh)
    R2 = A.sum() / (4 * pi)
    G = mesh.vertices.copy() if init is None else np.asarray(init, dtype=float).copy()
    G /= np.linalg.norm(G, axis=1)[:, None]
    G = recenter(G, A)
    K = splu((L + mu * sp.diags(A / R2)).tocsc())
    E = dirichlet_energy(G, L)
    energies = [E]
    for it in range(max_iter):
        grad = L @ G
        r = _constrained(G, _tangent(G, grad), A)
        res = float(np.max(np.linalg.norm(r, axis=1) / A) * R2)
        if res <= tol:
            info = HarmonicInfo(energies, res, it)
            return (G, info) if return_info else G
        d = _com_preserving(G, _tangent(G, -K.solve(r)), A)
        alpha = 1.0
        while True:
            Gt = G + alpha * d
            Gt /= np.linalg.norm(Gt, axis=1)[:, None]
            Gt = recenter(Gt, A)
            delta = Gt - G
            # energy change without cancellation against the total
            dE = float(np.sum(delta * grad) + 0.5 * np.sum(delta * (L @ delta)))
            if dE <= 0.0 or abs(dE) <= 1e-15 * E:
                # the second test only triggers once changes sit at round-off level
                Et = E + dE
                break
            alpha *= 0.5
            if alpha < 1e-8:
                raise NonConvergence(f"line search stalled at residual {res:.3e}")
        G, E = Gt, Et
        energies.append(E)
    raise NonConvergence(f"harmonic map not converged after {max_iter} iterations")


def random_initial_map(mesh, rng, noise=0.02):
    from .sphere_mesh import random_rotation
    R = random_rotation(rng)
    G = mesh.vertices @ R.T
    xi = _tangent(G, rng.normal(scale=noise, size=G.shape))
    G = G + xi
    return G / np.linalg.norm(G, axis=1)[:, None]


def procrustes_rotation(X, Y, weights=None):
    """Proper rotation R minimizing sum w |R x_i - y_i|^2."""
    w = np.ones(len(X)) if weights is None else np.asarray(weights)
    C = (Y * w[:, None]).T @ X
    U, _, Vt = np.linalg.svd(C)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def procrustes_residual(X, Y):
    R = procrustes_rotation(X, Y)
    return R, float(np.max(np.linalg.norm(X @ R.T - Y, axis=1)))


# ---- volume coordinate ------------------------------------------------------------

def _volume_density(sampler, z, s):
    rho = s + sampler.u(z)
    uz = sampler.u(z, 1)
    gu = sampler.grad(z)
    return rho ** 2 * np.sqrt(s ** 2 + uz ** 2 + s ** 2 * np.sum(gu ** 2, axis=1) / rho ** 2)


def slab_volumes(graph: CylinderGraph, leaves, sampler=None, nodes=8):
    """Volume of M between consecutive leaves.

    Per vertex, the height interval is split at the spline knots and each
    piece gets Gauss-Legendre quadrature; the angular directions use the
    sphere vertex weights.
    """
    sampler = sampler or GraphSampler(graph)
    s = graph.scale
    wts = graph.sphere_mesh.vertex_weights
    knots = graph.heights
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    out = []
    for a, b in zip(leaves[:-1], leaves[1:]):
        z0 = np.minimum(a.heights, b.heights)
        z1 = np.maximum(a.heights, b.heights)
        i0 = np.searchsorted(knots, z0)
        cand = [knots[np.clip(i0 + j, 0, len(knots) - 1)] for j in range(-1, 4)]
        brk = np.sort(np.stack([z0, z1] + [np.clip(c, z0, z1) for c in cand]), axis=0)
        acc = np.zeros_like(z0)
        for lo, hi in zip(brk[:-1], brk[1:]):
            half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
            if not np.any(half > 0):
                continue
            for t, w in zip(gx, gw):
                acc += w * half * _volume_density(sampler, mid + half * t, s)
        out.append(float(np.sum(wts * acc)))
    return np.array(out)


def volume_coordinate(leaves, graph: CylinderGraph, n=3, sampler=None):
    """Heights such that sigma * trapezoid(r^n) over each pair of consecutive
    labels equals the quadrature volume between the leaves; anchored at the
    first leaf's height."""
    V = slab_volumes(graph, leaves, sampler)
    sigma = sphere_volume_constant(n)
    r = np.array([lf.mean_radius for lf in leaves])
    dz = V / (sigma * 0.5 * (r[:-1] ** n + r[1:] ** n))
    if np.any(dz <= 0) or not np.all(np.isfinite(dz)):
        raise NonMonotoneRelabeling("volume increments must be positive")
    return leaves[0].z + np.concatenate([[0.0], np.cumsum(dz)])


def volume_identity_error(leaves, graph, labels, pairs=None, n=3, sampler=None):
    """max relative |Vol(v, w) - sigma * int_v^w r^n dz| over label pairs."""
    V = slab_volumes(graph, leaves, sampler)
    sigma = sphere_volume_constant(n)
    r = np.array([lf.mean_radius for lf in leaves])
    rhs = sigma * 0.5 * (r[:-1] ** n + r[1:] ** n) * np.diff(labels)
    cv, cr = np.concatenate([[0], np.cumsum(V)]), np.concatenate([[0], np.cumsum(rhs)])
    if pairs is None:
        pairs = [(k, k + 1) for k in range(len(leaves) - 1)]
    errs = [abs((cv[w] - cv[v]) - (cr[w] - cr[v])) / abs(cv[w] - cv[v]) for v, w in pairs]
    return float(max(errs))


# ---- Killing alignment ------------------------------------------------------------

def _skew(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])


def _expm_so3(w):
    th = np.linalg.norm(w)
    K = _skew(w)
    if th < 1e-12:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + np.sin(th) / th * K + (1 - np.cos(th)) / th ** 2 * K @ K


def image_weights(G, faces, nv):
    a = spherical_triangle_areas(G, faces)
    out = np.zeros(nv)
    for k in range(3):
        np.add.at(out, faces[:, k], a / 3.0)
    return out


def _drift_terms(leaf_a: Leaf, leaf_b: Leaf, mesh):
    """Pieces of the angular drift between consecutive leaves that do not
    depend on the rotation applied to leaf_b."""
    D = leaf_b.positions - leaf_a.positions
    Ubar = leaf_a.normals + leaf_b.normals
    Ubar /= np.linalg.norm(Ubar, axis=1)[:, None]
    c = np.sum(D * Ubar, axis=1)
    if np.all(c < 0):
        # leaves ordered against the axis: the normal follows the labels
        c, Ubar = -c, -Ubar
    if np.any(c <= 0):
        raise AlignmentSingularity("leaves are not ordered along the normal")
    t = D - c[:, None] * Ubar
    Gop = surface_gradient_operator(leaf_a.positions, mesh.faces)
    dG = apply_gradient(Gop, leaf_a.G)  # (V, 4, 3)
    base = leaf_a.G + np.einsum("vd,vdk->vk", t, dG)
    return base, c


def killing_defect(Gb, base, c, mesh):
    x = Gb
    a = image_weights(x, mesh.faces, mesh.n_vertices)
    Y = (Gb - base) / c[:, None]
    K = np.sum(a[:, None] * np.cross(x, Y), axis=0)
    M = np.einsum("v,vij->ij", a / c, np.eye(3)[None] - x[:, :, None] * x[:, None, :])
    return K, M


KILLING_NORM = 8 * pi / 3


def align_rotations(neck: "NormalNeck", tol=1e-8, max_iter=30) -> "NormalNeck":
    """Rotate the sphere maps leaf by leaf (first leaf fixed) so the normal
    drift has no rotational component."""
    mesh = neck.graph.sphere_mesh
    leaves = [replace(lf) for lf in neck.foliation]
    log = [np.eye(3)]
    leaves[0].rotation = np.eye(3)
    for k in range(len(leaves) - 1):
        a, b = leaves[k], leaves[k + 1]
        base, c = _drift_terms(a, b, mesh)
        G0 = b.G
        R = np.eye(3)
        for _ in range(max_iter):
            K, M = killing_defect(G0 @ R.T, base, c, mesh)
            if np.linalg.norm(K) / KILLING_NORM <= 1e-3 * tol:
                break
            if np.linalg.cond(M) > 1e12:
                raise AlignmentSingularity("Killing system is singular")
            R = _expm_so3(-np.linalg.solve(M, K)) @ R
        else:
            K, _ = killing_defect(G0 @ R.T, base, c, mesh)
            if np.linalg.norm(K) / KILLING_NORM > tol:
                raise AlignmentSingularity("rotation alignment did not converge")
        leaves[k + 1] = replace(b, G=G0 @ R.T, rotation=R @ b.rotation)
        log.append(R @ b.rotation)
    return replace(neck, foliation=leaves, rotation_log=log)


# ---- the neck and its certificate ----------------------------------------------------

@dataclass(eq=False)
class NormalNeck:
    graph: CylinderGraph
    foliation: list
    z_coordinate: np.ndarray
    rotation_log: list
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @property
    def parametrization(self):
        """Per-leaf maps (leaf vertex -> S^2); the sphere-to-leaf map is the
        inverse, evaluated by `sphere_to_leaf`."""
        return [lf.G for lf in self.foliation]

    @property
    def length(self):
        return float(self.z_coordinate[-1] - self.z_coordinate[0])

    def sphere_to_leaf(self, k, points):
        """Ambient positions of the leaf-k points whose sphere coordinates are `points`."""
        lf = self.foliation[k]
        mesh_img = _image_mesh(lf.G, self.graph.sphere_mesh)
        f, bary = mesh_img.locate(points)
        idx = mesh_img.faces[f]
        return np.einsum("nk,nkd->nd", bary, lf.positions[idx])


def _image_mesh(G, mesh):
    from .sphere_mesh import SphereMesh
    return SphereMesh(np.asarray(G), mesh.faces, mesh.level)


@dataclass
class NormalityCertificate:
    residual_cmc: float
    residual_harmonic: float
    residual_com: float
    residual_volume: float
    residual_killing: float
    tolerances: dict

    @property
    def residuals(self):
        return {name: getattr(self, f"residual_{name}") for name in CONDITIONS}

    @property
    def flags(self):
        return {k: bool(v <= self.tolerances[k]) for k, v in self.residuals.items()}

    @property
    def passed(self):
        return all(self.flags.values())

    pass_ = property(lambda self: self.passed)

    def __bool__(self):
        return self.passed

    def failing(self):
        return [k for k, v in self.flags.items() if not v]

    def to_dict(self):
        return {"pass": self.passed,
                "conditions": {k: {"residual": v, "tolerance": self.tolerances[k],
                                   "pass": self.flags[k]} for k, v in self.residuals.items()}}

    @classmethod
    def from_dict(cls, d):
        c = d["conditions"]
        return cls(*(float(c[k]["residual"]) for k in CONDITIONS),
                   {k: float(c[k]["tolerance"]) for k in CONDITIONS})


def certify_normal(neck: NormalNeck, tolerances=None):
    """Re-derive every normality residual from the stored raw data."""
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(neck.tolerances or {})
    tol.update(tolerances or {})
    graph = neck.graph
    mesh = graph.sphere_mesh
    sampler = GraphSampler(graph)
    leaves = []
    cmc = harm = com = kill = 0.0
    for lf in neck.foliation:
        pos, U = leaf_geometry(graph, sampler, lf.heights)
        H, _, Ai = leaf_mean_curvature(pos, U, mesh)
        r = np.sqrt(Ai.sum() / (4 * pi))
        cmc = max(cmc, float(np.ptp(H)) * r)
        L, A = _leaf_operators(pos, mesh)
        G = np.asarray(lf.G)
        harm = max(harm, harmonic_residual(G, L, A, A.sum() / (4 * pi)))
        com = max(com, float(np.linalg.norm(center_of_mass(G, A))))
        leaves.append(Leaf(lf.z, lf.phi, pos, U, H, section_from_positions(lf.z, pos, mesh), G))
    for a, b in zip(leaves[:-1], leaves[1:]):
        base, c = _drift_terms(a, b, mesh)
        K, _ = killing_defect(b.G, base, c, mesh)
        kill = max(kill, float(np.linalg.norm(K)) / KILLING_NORM)
    vol = volume_identity_error(leaves, graph, np.asarray(neck.z_coordinate), sampler=sampler)
    return NormalityCertificate(cmc, harm, com, vol, kill, tol)


def build_normal_neck(graph: CylinderGraph, tolerances=None, rng=None, skip_volume=False,
                      init_maps=None, leaf_heights=None):
    """CMC foliation -> harmonic maps with centre of mass at 0 -> volume labels ->
    rotation alignment.  Leaves sit at the graph heights unless `leaf_heights`
    is given."""
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    leaves = cmc_foliate(graph, tol["cmc"], leaf_heights)
    mesh = graph.sphere_mesh
    for k, lf in enumerate(leaves):
        init = None
        if init_maps is not None:
            init = init_maps[k]
        elif rng is not None:
            init = random_initial_map(mesh, rng)
        G, info = harmonic_reparametrize(lf.positions, mesh, init, tol["harmonic"],
                                         return_info=True)
        lf.G, lf.energies = G, info.energies
    labels = (np.array([lf.z for lf in leaves]) if skip_volume
              else volume_coordinate(leaves, graph))
    for lf, z in zip(leaves, labels):
        lf.label = float(z)
    neck = NormalNeck(graph, leaves, labels, [np.eye(3)] * len(leaves), tol)
    return align_rotations(neck, tol["killing"])
