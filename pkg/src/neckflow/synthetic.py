"""Synthetic graphs and necks with known answers, for tests and fixtures."""

from __future__ import annotations

from dataclasses import replace
from math import pi, sqrt

import numpy as np

from .graph import CylinderGraph
from .sphere_mesh import axis_rotation, icosphere


def y20(points):
    """L2-normalized zonal harmonic of degree two."""
    z = np.asarray(points)[:, 2]
    return sqrt(5 / (16 * pi)) * (3 * z ** 2 - 1)


def degree_two_basis(points):
    """Orthonormal real spherical harmonics of degree two, shape (V, 5)."""
    x, y, z = np.asarray(points).T
    c = sqrt(15 / (4 * pi))
    return np.stack([c * x * y, c * y * z, y20(points), c * x * z, 0.5 * c * (x ** 2 - y ** 2)],
                    axis=1)


def _heights(a, b, n_heights):
    return np.linspace(a, b, n_heights)


def harmonic_graph(delta, level=4, n_heights=33, a=0.0, b=3.0, scale=1.0):
    """u = delta * scale * Y20, the same at every height."""
    mesh = icosphere(level)
    h = _heights(a, b, n_heights)
    u = delta * scale * np.tile(y20(mesh.vertices), (n_heights, 1))
    return CylinderGraph(a, b, mesh, h, u, scale)


def perturbed_graph(delta, rng=None, level=3, n_heights=33, a=0.0, b=3.0, scale=1.0):
    """u = delta * sum_m c_m(z) Y2m with random cubic coefficients c_m (cubic
    in z, so splines through the samples reproduce it exactly)."""
    rng = np.random.default_rng(0) if rng is None else rng
    mesh = icosphere(level)
    h = _heights(a, b, n_heights)
    coef = rng.uniform(-1.0, 1.0, size=(4, 5))
    t = (h - a) / max(b - a, 1e-300)
    poly = np.stack([t ** p for p in range(4)], axis=1) @ coef  # (H, 5)
    poly /= max(1.0, float(np.max(np.abs(poly))))
    u = delta * scale * poly @ degree_two_basis(mesh.vertices).T
    return CylinderGraph(a, b, mesh, h, u, scale)


def rotational_graph(fun, a=-1.0, b=1.0, n_heights=33, level=3, scale=1.0):
    """Surface of revolution with radius scale * (1 + fun(z))."""
    mesh = icosphere(level)
    h = _heights(a, b, n_heights)
    u = scale * np.repeat(np.asarray(fun(h), dtype=float)[:, None], mesh.n_vertices, axis=1)
    return CylinderGraph(a, b, mesh, h, u, scale)


def cone_graph(rate=0.5, a=-0.5, b=0.5, n_heights=33, level=3):
    """Mean radius exp(rate * z)."""
    return rotational_graph(lambda z: np.exp(rate * z) - 1.0, a, b, n_heights, level)


def twist_neck(neck, rate, axis=(0.0, 0.0, 1.0)):
    """Compose each leaf's sphere map with a rotation by rate * z about `axis`."""
    leaves = [replace(lf, G=np.asarray(lf.G) @ axis_rotation(axis, rate * lf.z).T)
              for lf in neck.foliation]
    return replace(neck, foliation=leaves)
