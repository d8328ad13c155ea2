"""Rotationally symmetric hypersurfaces in R^{n+1} given by a profile curve.

A profile is the planar curve (x, r) swept around the x axis.  Samples are
ordered by strictly increasing x but need not be uniformly spaced: all
derivatives are taken with respect to the sample index and converted to
arclength, so the same code serves fixed grids and moving (flowed) grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from .errors import InputError, InsufficientSamples, NonPositiveRadius

END_KINDS = ("capped", "periodic", "open")


@dataclass(frozen=True, eq=False)
class RadialProfile:
    n: int
    axis_samples: np.ndarray
    radius: np.ndarray
    ends: tuple = ("open", "open")
    period: float | None = None

    def __post_init__(self):
        x = np.asarray(self.axis_samples, dtype=float)
        r = np.asarray(self.radius, dtype=float)
        object.__setattr__(self, "axis_samples", x)
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "ends", tuple(self.ends))
        if self.n < 3:
            raise InputError("n must be at least 3")
        if x.ndim != 1 or x.shape != r.shape:
            raise InputError("axis_samples and radius must be 1-d arrays of equal length")
        if len(x) < 16:
            raise InputError("a profile needs at least 16 samples")
        if not np.all(np.diff(x) > 0):
            raise InputError("axis_samples must be strictly increasing")
        if any(e not in END_KINDS for e in self.ends):
            raise InputError(f"unknown end condition in {self.ends}")
        if np.any(~np.isfinite(r)) or np.any(r < 0):
            raise InputError("radius must be finite and non-negative")
        periodic = [e == "periodic" for e in self.ends]
        if any(periodic) and not all(periodic):
            raise InputError("periodic ends come in pairs")
        if all(periodic):
            if self.period is None or self.period <= x[-1] - x[0]:
                raise InputError("periodic profile needs period > axis extent")
        for side, idx in (("left", 0), ("right", -1)):
            kind = self.ends[0 if side == "left" else 1]
            if kind == "capped" and r[idx] != 0.0:
                raise InputError(f"capped {side} end must close on the axis (r = 0)")
            if kind != "capped" and r[idx] <= 0:
                raise InputError(f"{side} end sample must have positive radius")

    @property
    def m(self):
        return len(self.axis_samples)

    @property
    def periodic(self):
        return self.ends[0] == "periodic"

    def scaled(self, c):
        return RadialProfile(self.n, self.axis_samples * c, self.radius * c, self.ends,
                             None if self.period is None else self.period * c)

    def arclength(self):
        """Cumulative arclength at each sample, starting at 0."""
        seg = np.hypot(np.diff(self.axis_samples), np.diff(self.radius))
        return np.concatenate([[0.0], np.cumsum(seg)])

    def total_length(self):
        s = self.arclength()
        if self.periodic:
            return s[-1] + np.hypot(self.axis_samples[0] + self.period - self.axis_samples[-1],
                                    self.radius[0] - self.radius[-1])
        return s[-1]

    def radius_spline(self):
        x, r = self.axis_samples, self.radius
        if self.periodic:
            return CubicSpline(np.append(x, x[0] + self.period), np.append(r, r[0]),
                               bc_type="periodic")
        return CubicSpline(x, r)

    def closure_indices(self):
        """Sample indices lying on the axis (tips and interior closures)."""
        return np.flatnonzero(self.radius == 0.0)


@dataclass(frozen=True)
class WeingartenData:
    eigenvalues: np.ndarray
    H: float
    grad_norms: tuple = field(default_factory=tuple)

    def scaled_eigenvalues(self, factor):
        return np.asarray(self.eigenvalues) * factor


def unit_ball_volume(n):
    return pi ** (n / 2) / gamma(n / 2 + 1)


def _padded(profile: RadialProfile, pad):
    """Coordinates with `pad` ghost samples on each side.

    periodic: wrap with the period shift; capped: reflect the curve through
    the axis (x even, r odd about the tip); open: NaN (no data).
    """
    x, r = profile.axis_samples, profile.radius
    m = len(x)
    if pad >= m:
        raise InsufficientSamples("stencil exceeds the grid")
    if profile.periodic:
        P = profile.period
        xl, rl = x[m - pad:] - P, r[m - pad:]
        xr, rr = x[:pad] + P, r[:pad]
    else:
        if profile.ends[0] == "capped":
            xl, rl = x[pad:0:-1], -r[pad:0:-1]
        else:
            xl, rl = np.full(pad, np.nan), np.full(pad, np.nan)
        if profile.ends[1] == "capped":
            xr, rr = x[-2:-pad - 2:-1], -r[-2:-pad - 2:-1]
        else:
            xr, rr = np.full(pad, np.nan), np.full(pad, np.nan)
    return np.concatenate([xl, x, xr]), np.concatenate([rl, r, rr])


def curvature_field(profile: RadialProfile, k=0):
    """Principal curvatures for every sample.

    Returns (lam_axial, lam_round, H, grad) with grad of shape (k, m): the
    discrete |nabla^l W| for l = 1..k (NaN where the stencil leaves the data).
    """
    n = profile.n
    pad = k + 1
    X, R = _padded(profile, pad)
    xu = 0.5 * (X[2:] - X[:-2])
    ru = 0.5 * (R[2:] - R[:-2])
    xuu = X[2:] - 2 * X[1:-1] + X[:-2]
    ruu = R[2:] - 2 * R[1:-1] + R[:-2]
    speed = np.hypot(xu, ru)
    kappa = (xu * ruu - ru * xuu) / speed ** 3
    lam_a = -kappa + 0.0
    Rc = R[1:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_r = np.where(Rc == 0.0, lam_a, xu / (Rc * speed))
    grads = []
    fa, fr, sp_ = lam_a, lam_r, speed
    for _ in range(k):
        fa = 0.5 * (fa[2:] - fa[:-2]) / sp_[1:-1]
        fr = 0.5 * (fr[2:] - fr[:-2]) / sp_[1:-1]
        sp_ = sp_[1:-1]
        grads.append(np.sqrt(fa ** 2 + (n - 1) * fr ** 2))
    m = profile.m
    cut = slice(k, k + m)
    lam_a, lam_r = lam_a[cut], lam_r[cut]
    H = lam_a + (n - 1) * lam_r
    grad = np.array([g[k - l - 1: k - l - 1 + m] for l, g in enumerate(grads)]).reshape(k, m)
    return lam_a, lam_r, H, grad


def profile_curvature(profile: RadialProfile, i, k=1) -> WeingartenData:
    """Shape-operator summary at sample i with |nabla^l W| for l <= k."""
    if profile.m < 2 * k + 4:
        raise InsufficientSamples(f"need at least {2 * k + 4} samples for order {k}")
    is_tip = (i == 0 and profile.ends[0] == "capped") or (
        i in (profile.m - 1, -1) and profile.ends[1] == "capped")
    if profile.radius[i] <= 0 and not is_tip:
        raise NonPositiveRadius(f"radius at sample {i} is {profile.radius[i]}")
    lam_a, lam_r, H, grad = curvature_field(profile, k)
    vals = [lam_a[i], lam_r[i], H[i], *grad[:, i]]
    if not np.all(np.isfinite(vals)):
        raise InsufficientSamples(f"stencil at sample {i} leaves the profile")
    eig = np.sort(np.array([lam_a[i]] + [lam_r[i]] * (profile.n - 1)))
    return WeingartenData(eig, float(eig.sum()), tuple(float(g) for g in grad[:, i]))


def enclosed_volume(profile: RadialProfile):
    """Volume of the solid of revolution (trapezoid rule in x)."""
    x, r = profile.axis_samples, profile.radius ** profile.n
    vol = trapezoid(r, x)
    if profile.periodic:
        vol += 0.5 * (r[0] + r[-1]) * (x[0] + profile.period - x[-1])
    return unit_ball_volume(profile.n) * vol


# ---- constructors -----------------------------------------------------------

def cylinder_profile(radius=1.0, length=2 * pi, m=512, n=3, ends="periodic"):
    if ends == "periodic":
        x = np.linspace(0.0, length, m, endpoint=False)
        return RadialProfile(n, x, np.full(m, float(radius)), ("periodic", "periodic"), length)
    x = np.linspace(0.0, length, m)
    return RadialProfile(n, x, np.full(m, float(radius)), (ends, ends))


def sphere_profile(R=1.0, m=512, n=3, center=0.0):
    theta = np.linspace(0.0, pi, m)
    r = R * np.sin(theta)
    r[0] = r[-1] = 0.0
    return RadialProfile(n, center - R * np.cos(theta), r, ("capped", "capped"))


def function_profile(fun, x0, x1, m=512, n=3, ends=("open", "open"), period=None):
    if ends[0] == "periodic":
        x = np.linspace(x0, x1, m, endpoint=False)
        return RadialProfile(n, x, fun(x), ends, period if period is not None else x1 - x0)
    x = np.linspace(x0, x1, m)
    return RadialProfile(n, x, fun(x), ends)


def resample_closed_curve(x, r, m):
    """Resample a capped curve (tips on the axis) uniformly in arclength."""
    s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(x), np.diff(r)))])
    t = np.linspace(0.0, s[-1], m)
    xs = np.interp(t, s, x)
    rs = np.interp(t, s, r)
    rs[0] = rs[-1] = 0.0
    return xs, rs


def dumbbell_profile(bulb_radius=1.0, neck_radius=0.35, half_length=3.0, neck_half_length=1.0,
                     transition=0.15, m=200, n=3, flatness=8):
    """Closed dumbbell: two round-ended bulbs joined by a thin tube."""
    theta = np.linspace(0.0, pi, 20001)
    x = -half_length * np.cos(theta)
    bump = 0.5 * (1.0 - np.tanh((np.abs(x) - neck_half_length) / transition))
    envelope = np.sqrt(np.clip(1.0 - (x / half_length) ** flatness, 0.0, None))
    r = envelope * (bulb_radius - (bulb_radius - neck_radius) * bump)
    xs, rs = resample_closed_curve(x, r, m)
    return RadialProfile(n, xs, rs, ("capped", "capped"))


def waist_profile(amplitude=0.1, half_length=8.0, m=513, n=3, wavelength=4.0):
    """Open profile 1 - amplitude*(1 + cos(x/wavelength))/2-type waist around x = 0."""
    fun = lambda x: 1.0 - amplitude * 0.5 * (1.0 + np.cos(x / wavelength))
    return function_profile(fun, -half_length, half_length, m, n)
