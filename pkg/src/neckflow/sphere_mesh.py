"""Triangulated unit spheres and the discrete operators built on them.

The cross-sections of a three-dimensional neck are 2-spheres; they are all
sampled on one subdivided icosahedron so that quantities at different heights
share a vertex indexing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl
from scipy.spatial import cKDTree

_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=np.int64)


def _icosahedron():
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    return verts / np.linalg.norm(verts, axis=1)[:, None], _ICO_FACES.copy()


def _subdivide(verts, faces):
    edges = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    uniq, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    mid = verts[uniq[:, 0]] + verts[uniq[:, 1]]
    mid /= np.linalg.norm(mid, axis=1)[:, None]
    nv = len(verts)
    nf = len(faces)
    ab, bc, ca = (inverse[:nf] + nv, inverse[nf:2 * nf] + nv, inverse[2 * nf:] + nv)
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate([
        np.stack([a, ab, ca], axis=1),
        np.stack([b, bc, ab], axis=1),
        np.stack([c, ca, bc], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ])
    return np.vstack([verts, mid]), new_faces


def cotan_weights(positions, faces, face_edges, n_edges):
    """Per-edge cotangent weights (1/2)(cot a + cot b) for a mesh in any R^d."""
    w = np.zeros(n_edges)
    for k in range(3):
        o = positions[faces[:, k]]
        a = positions[faces[:, (k + 1) % 3]] - o
        b = positions[faces[:, (k + 2) % 3]] - o
        ab = np.einsum("ij,ij->i", a, b)
        cross2 = np.einsum("ij,ij->i", a, a) * np.einsum("ij,ij->i", b, b) - ab ** 2
        if np.any(cross2 <= 0):
            raise FloatingPointError("degenerate triangle")
        # corner k is opposite the edge (k+1, k+2), stored as face_edges[:, (k+1) % 3]
        np.add.at(w, face_edges[:, (k + 1) % 3], 0.5 * ab / np.sqrt(cross2))
    return w


def triangle_areas(positions, faces):
    a = positions[faces[:, 1]] - positions[faces[:, 0]]
    b = positions[faces[:, 2]] - positions[faces[:, 0]]
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    ab = np.einsum("ij,ij->i", a, b)
    return 0.5 * np.sqrt(np.maximum(aa * bb - ab ** 2, 0.0))


def spherical_triangle_areas(verts, faces):
    """Exact areas of the geodesic triangles spanned by unit vectors."""
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


@dataclass(frozen=True, eq=False)
class SphereMesh:
    """Closed triangulation of the unit 2-sphere (outward-oriented faces)."""

    vertices: np.ndarray
    faces: np.ndarray
    level: int = -1

    @property
    def n_vertices(self):
        return len(self.vertices)

    @cached_property
    def _edge_data(self):
        f = self.faces
        raw = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges, inverse = np.unique(np.sort(raw, axis=1), axis=0, return_inverse=True)
        inverse = inverse.ravel()
        nf = len(f)
        face_edges = np.stack([inverse[:nf], inverse[nf:2 * nf], inverse[2 * nf:]], axis=1)
        return edges, face_edges

    @property
    def edges(self):
        return self._edge_data[0]

    @property
    def face_edges(self):
        """face_edges[f, k] is the edge joining corners k and k+1 of face f."""
        return self._edge_data[1]

    def euler_characteristic(self):
        return self.n_vertices - len(self.edges) + len(self.faces)

    @cached_property
    def spherical_face_areas(self):
        return spherical_triangle_areas(self.vertices, self.faces)

    @cached_property
    def flat_face_areas(self):
        return triangle_areas(self.vertices, self.faces)

    @cached_property
    def vertex_weights(self):
        """Quadrature weights on the unit sphere (sum exactly 4*pi)."""
        w = np.zeros(self.n_vertices)
        for k in range(3):
            np.add.at(w, self.faces[:, k], self.spherical_face_areas / 3.0)
        return w

    @cached_property
    def reference_cotan(self):
        return cotan_weights(self.vertices, self.faces, self.face_edges, len(self.edges))

    @cached_property
    def balance_correction(self):
        """Minimum-norm edge-weight correction making the identity map of the
        reference mesh an exact critical point of the discrete Dirichlet energy
        into the unit sphere (tangential cotan residual = 0 at every vertex)."""
        v = self.vertices
        e = self.edges
        n = self.n_vertices
        t1, t2 = self.tangent_frames
        rows, cols, vals = [], [], []
        k = np.arange(len(e))
        for a, b in ((e[:, 0], e[:, 1]), (e[:, 1], e[:, 0])):
            d = v[b] - v[a]
            rows += [2 * a, 2 * a + 1]
            cols += [k, k]
            vals += [np.einsum("ij,ij->i", d, t1[a]), np.einsum("ij,ij->i", d, t2[a])]
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(2 * n, len(e)))
        r0 = A @ self.reference_cotan
        # A A^T has a 3-dim kernel (torque balance holds identically); regularize.
        M = (A @ A.T).tocsc() + 1e-12 * sp.identity(2 * n, format="csc")
        lam = spl.spsolve(M, r0)
        return -(A.T @ lam)

    @cached_property
    def tangent_frames(self):
        v = self.vertices
        ref = np.where(np.abs(v[:, 0]) < 0.9, 0, 1)
        t1 = np.cross(v, np.eye(3)[ref])
        t1 /= np.linalg.norm(t1, axis=1)[:, None]
        return t1, np.cross(v, t1)

    @cached_property
    def vertex_faces(self):
        """Padded (V, max_valence) array of incident faces, -1 padded."""
        counts = np.bincount(self.faces.ravel(), minlength=self.n_vertices)
        out = -np.ones((self.n_vertices, counts.max()), dtype=np.int64)
        fill = np.zeros(self.n_vertices, dtype=np.int64)
        for fi, face in enumerate(self.faces):
            for vtx in face:
                out[vtx, fill[vtx]] = fi
                fill[vtx] += 1
        return out

    @cached_property
    def neighbors(self):
        nb = [[] for _ in range(self.n_vertices)]
        for a, b in self.edges:
            nb[a].append(b)
            nb[b].append(a)
        return [np.array(x) for x in nb]

    @cached_property
    def _tree(self):
        return cKDTree(self.vertices)

    @cached_property
    def gradient_operator(self):
        """Sparse (3V, V) operator: tangential vertex gradients on the unit sphere.

        Face gradients of the piecewise-linear interpolant, averaged with
        face-area weights and projected onto the vertex tangent plane.
        Output layout: rows [0:V] x-components, [V:2V] y, [2V:3V] z.
        """
        return surface_gradient_operator(self.vertices, self.faces, project_normals=self.vertices)

    def laplacian(self, edge_weights):
        return laplacian_from_weights(self.edges, edge_weights, self.n_vertices)

    def locate(self, points):
        """Face index and barycentric coordinates of the radial projections of
        `points` onto the (flat) mesh."""
        q = np.asarray(points, dtype=float)
        q = q / np.linalg.norm(q, axis=1)[:, None]
        _, nearest = self._tree.query(q, k=3)
        faces_out = -np.ones(len(q), dtype=np.int64)
        bary_out = np.zeros((len(q), 3))
        best = np.full(len(q), -np.inf)
        for col in range(nearest.shape[1]):
            cand = self.vertex_faces[nearest[:, col]]
            for j in range(cand.shape[1]):
                fidx = cand[:, j]
                ok = fidx >= 0
                f = self.faces[np.where(ok, fidx, 0)]
                a, b, c = self.vertices[f[:, 0]], self.vertices[f[:, 1]], self.vertices[f[:, 2]]
                bary = _ray_barycentric(q, a, b, c)
                score = np.where(ok, bary.min(axis=1), -np.inf)
                better = score > best
                best = np.where(better, score, best)
                faces_out = np.where(better, fidx, faces_out)
                bary_out = np.where(better[:, None], bary, bary_out)
        if np.any(best < -1e-9):
            raise FloatingPointError("point location failed")
        return faces_out, bary_out

    def interpolate(self, values, points):
        """Piecewise-linear interpolation of per-vertex values at radial
        projections of `points` (values may carry trailing dimensions)."""
        f, bary = self.locate(points)
        idx = self.faces[f]
        vals = np.asarray(values)
        return np.einsum("nk,nk...->n...", bary, vals[idx])

    def rotated(self, R):
        """Same combinatorics with vertices rotated by R (pre-composition of
        any parametrization on this mesh with R^{-1})."""
        return SphereMesh(self.vertices @ np.asarray(R).T, self.faces.copy(), self.level)


def _ray_barycentric(q, a, b, c):
    # intersection of the ray t*q with the plane of (a,b,c), in barycentric coords
    n = np.cross(b - a, c - a)
    t = np.einsum("ij,ij->i", a, n) / np.einsum("ij,ij->i", q, n)
    p = q * t[:, None]
    vol = np.einsum("ij,ij->i", n, n)
    l0 = np.einsum("ij,ij->i", np.cross(b - p, c - p), n) / vol
    l1 = np.einsum("ij,ij->i", np.cross(c - p, a - p), n) / vol
    return np.stack([l0, l1, 1.0 - l0 - l1], axis=1)


def laplacian_from_weights(edges, w, n):
    """Positive semi-definite graph Laplacian sum_j w_ij (f_i - f_j)."""
    i, j = edges[:, 0], edges[:, 1]
    W = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                      shape=(n, n)).tocsr()
    return (sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsc()


def surface_gradient_operator(positions, faces, project_normals=None):
    """Sparse (d*V, V) vertex-gradient operator for a triangle mesh in R^d."""
    P = np.asarray(positions, dtype=float)
    nv, d = P.shape
    p0, p1, p2 = P[faces[:, 0]], P[faces[:, 1]], P[faces[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    g11 = np.einsum("ij,ij->i", e1, e1)
    g12 = np.einsum("ij,ij->i", e1, e2)
    g22 = np.einsum("ij,ij->i", e2, e2)
    det = g11 * g22 - g12 ** 2
    area = 0.5 * np.sqrt(det)
    # gradients of barycentric basis functions 1 and 2 (basis 0 is minus their sum)
    gb1 = ((g22[:, None] * e1 - g12[:, None] * e2) / det[:, None])
    gb2 = ((g11[:, None] * e2 - g12[:, None] * e1) / det[:, None])
    gb0 = -(gb1 + gb2)
    varea = np.zeros(nv)
    for k in range(3):
        np.add.at(varea, faces[:, k], area)
    rows, cols, vals = [], [], []
    for corner, gb in ((0, gb0), (1, gb1), (2, gb2)):
        col = faces[:, corner]
        for target in range(3):
            vtx = faces[:, target]
            for c in range(d):
                rows.append(c * nv + vtx)
                cols.append(col)
                vals.append(area * gb[:, c] / varea[vtx])
    G = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(d * nv, nv))
    if project_normals is not None:
        nrm = np.asarray(project_normals, dtype=float)
        nrm = nrm / np.linalg.norm(nrm, axis=1)[:, None]
        blocks = []
        for c in range(d):
            row = [sp.diags((1.0 if c == e else 0.0) - nrm[:, c] * nrm[:, e]) for e in range(d)]
            blocks.append(row)
        G = (sp.bmat(blocks) @ G).tocsr()
    return G


def apply_gradient(G, f):
    """Apply a (d*V, V) gradient operator to (V,) or (V, m) data -> (V, d[, m])."""
    f = np.asarray(f)
    nv = G.shape[1]
    d = G.shape[0] // nv
    out = G @ f
    if f.ndim == 1:
        return out.reshape(d, nv).T
    return np.moveaxis(out.reshape(d, nv, -1), 0, 1)


@lru_cache(maxsize=8)
def icosphere(level=4):
    """Subdivided icosahedron projected to the unit sphere.

    Level 4 has 2562 vertices and 5120 faces.
    """
    v, f = _icosahedron()
    for _ in range(int(level)):
        v, f = _subdivide(v, f)
    return SphereMesh(v, f, int(level))


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def axis_rotation(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def rotation_angle(R):
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))
