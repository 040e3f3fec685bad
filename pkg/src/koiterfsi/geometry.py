"""
Reference surfaces, tubular coordinates and the ALE map.

Two reference geometries are supported: a flat periodic channel
``omega x (-d, 0)`` whose top face carries the shell, and a cylinder of radius
``R`` with periodic angle and axial coordinate.  Vectors carry their Cartesian
component in the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .discrete import PeriodicGrid2D, ScalarField2D, trig_eval
from .errors import DisplacementOutOfRange, OutOfCollar

__all__ = [
    "BETA_SENTINEL",
    "ReferenceSurface",
    "Frame",
    "TubularChart",
    "flat_channel",
    "cylinder",
    "surface_frame",
    "sphere_frame",
    "gamma",
    "gamma_from_frame",
    "gamma_derivative",
    "smoothstep7",
    "tubular_coords",
    "Phi",
    "ale_map",
    "ale_map_inverse",
    "ale_jacobian",
]

# stands in for beta(Omega) = +inf; collar checks treat it as unbounded
BETA_SENTINEL = 1e300


@dataclass(frozen=True)
class ReferenceSurface:
    """Reference geometry.

    Parameters
    ----------
    kind : {"flat", "cylinder"}
    radius : float, optional
        Cylinder radius ``R``.
    depth : float, optional
        Channel depth ``d``; the fluid occupies ``-d < s < 0``.
    length : float
        Axial period of the cylinder.
    """

    kind: str
    radius: float | None = None
    depth: float | None = None
    length: float = 1.0

    def __post_init__(self):
        if self.kind == "flat":
            if self.depth is None or self.depth <= 0:
                raise ValueError("flat channel needs a positive depth")
        elif self.kind == "cylinder":
            if self.radius is None or self.radius <= 0:
                raise ValueError("cylinder needs a positive radius")
            if self.length <= 0:
                raise ValueError("cylinder length must be positive")
        else:
            raise ValueError(f"unknown surface kind {self.kind!r}")

    @property
    def alpha_omega(self):
        return -self.depth if self.kind == "flat" else -self.radius

    @property
    def beta_omega(self):
        return BETA_SENTINEL

    @property
    def periods(self):
        if self.kind == "flat":
            return (1.0, 1.0)
        return (2 * np.pi, self.length)

    def grid(self, n1, n2=None):
        """Periodic parameter grid on ``omega`` for this surface."""
        n2 = n1 if n2 is None else n2
        L1, L2 = self.periods
        return PeriodicGrid2D(n1, n2, L1, L2)

    def div_normal(self, y1, y2):
        """Divergence of the unit normal field, evaluated on the surface."""
        shape = np.broadcast(np.asarray(y1), np.asarray(y2)).shape
        if self.kind == "flat":
            return np.zeros(shape)
        return np.full(shape, 1.0 / self.radius)


def flat_channel(depth=1.0):
    return ReferenceSurface("flat", depth=depth)


def cylinder(radius=1.0, length=1.0):
    return ReferenceSurface("cylinder", radius=radius, length=length)


@dataclass
class Frame:
    """Frame fields of a parameterisation at one or many points.

    ``a`` stacks the tangents ``(a1, a2)``; ``dn`` stacks ``(d1 n, d2 n)``;
    ``d2phi[a, b]`` and ``d2n[a, b]`` are second parameter derivatives.
    ``A`` is the contravariant metric.
    """

    phi: np.ndarray
    a: np.ndarray
    n: np.ndarray
    dn: np.ndarray
    d2phi: np.ndarray
    d2n: np.ndarray
    A: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.A is None:
            g = np.einsum("a...i,b...i->ab...", self.a, self.a)
            det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
            self.A = np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) / det

    @property
    def a1(self):
        return self.a[0]

    @property
    def a2(self):
        return self.a[1]

    @property
    def dn1(self):
        return self.dn[0]

    @property
    def dn2(self):
        return self.dn[1]

    @property
    def cross(self):
        """``a1 x a2``."""
        return np.cross(self.a[0], self.a[1])

    @property
    def dS(self):
        return np.linalg.norm(self.cross, axis=-1)


def _stack(*comps):
    return np.stack(np.broadcast_arrays(*comps), axis=-1)


def surface_frame(surf, y1, y2):
    """Frame of ``surf`` at parameter points ``(y1, y2)`` (periodic wrap applied).

    Examples
    --------
    >>> f = surface_frame(cylinder(1.0), 0.0, 0.0)
    >>> f.a1, f.n
    (array([0., 1., 0.]), array([1., 0., 0.]))
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    L1, L2 = surf.periods
    y1, y2 = np.broadcast_arrays(np.mod(y1, L1), np.mod(y2, L2))
    zero = np.zeros(y1.shape)
    one = np.ones(y1.shape)
    if surf.kind == "flat":
        phi = _stack(y1, y2, zero)
        a = np.stack([_stack(one, zero, zero), _stack(zero, one, zero)])
        n = _stack(zero, zero, one)
        dn = np.zeros((2,) + y1.shape + (3,))
        d2 = np.zeros((2, 2) + y1.shape + (3,))
        return Frame(phi, a, n, dn, d2, d2.copy())
    R = surf.radius
    c, s = np.cos(y1), np.sin(y1)
    phi = _stack(R * c, R * s, y2)
    a = np.stack([_stack(-R * s, R * c, zero), _stack(zero, zero, one)])
    n = _stack(c, s, zero)
    dn = np.stack([_stack(-s, c, zero), _stack(zero, zero, zero)])
    d2phi = np.zeros((2, 2) + y1.shape + (3,))
    d2phi[0, 0] = _stack(-R * c, -R * s, zero)
    d2n = np.zeros((2, 2) + y1.shape + (3,))
    d2n[0, 0] = _stack(-c, -s, zero)
    return Frame(phi, a, n, dn, d2phi, d2n)


def sphere_frame(radius, theta, polar):
    """Sphere parameterised by azimuth ``theta`` and polar angle, inward normal.

    Only used as closed-form validation data; the sphere is not simulated.
    """
    th = np.asarray(theta, dtype=float)
    ph = np.asarray(polar, dtype=float)
    th, ph = np.broadcast_arrays(th, ph)
    R = radius
    zero = np.zeros(th.shape)
    ct, st, cp, sp = np.cos(th), np.sin(th), np.cos(ph), np.sin(ph)
    phi = R * _stack(ct * sp, st * sp, cp)
    a = np.stack([R * _stack(-st * sp, ct * sp, zero), R * _stack(ct * cp, st * cp, -sp)])
    n = -phi / R
    dn = -a / R
    d2phi = np.stack(
        [
            np.stack([R * _stack(-ct * sp, -st * sp, zero), R * _stack(-st * cp, ct * cp, zero)]),
            np.stack([R * _stack(-st * cp, ct * cp, zero), R * _stack(-ct * sp, -st * sp, -cp)]),
        ]
    )
    return Frame(phi, a, n, dn, d2phi, -d2phi / R)


def gamma_from_frame(frame, eta):
    """Coercivity weight ``gamma(eta)`` from frame fields.

    ``gamma = (|a1 x a2| + eta n.(a1 x d2n + d1n x a2) + eta^2 n.(d1n x d2n)) / |a1 x a2|``
    """
    a1, a2, n = frame.a[0], frame.a[1], frame.n
    dn1, dn2 = frame.dn[0], frame.dn[1]
    area = frame.dS
    lin = np.einsum("...i,...i->...", n, np.cross(a1, dn2) + np.cross(dn1, a2))
    quad = np.einsum("...i,...i->...", n, np.cross(dn1, dn2))
    return (area + eta * lin + eta**2 * quad) / area


def gamma_derivative(frame, eta):
    """``d gamma / d eta`` at displacement ``eta``."""
    a1, a2, n = frame.a[0], frame.a[1], frame.n
    dn1, dn2 = frame.dn[0], frame.dn[1]
    lin = np.einsum("...i,...i->...", n, np.cross(a1, dn2) + np.cross(dn1, a2))
    quad = np.einsum("...i,...i->...", n, np.cross(dn1, dn2))
    return (lin + 2 * eta * quad) / frame.dS


def gamma(surf, y, eta_val):
    """``gamma(eta)`` of ``surf`` at parameter point(s) ``y = (y1, y2)``.

    Examples
    --------
    >>> float(gamma(cylinder(2.0), (0.3, 0.1), 1.0))
    1.5
    """
    return gamma_from_frame(surface_frame(surf, y[0], y[1]), eta_val)


def smoothstep7(t, deriv=0):
    """Degree-7 smoothstep on ``[0, 1]`` (C3), constant outside."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    inside = (t > 0.0) & (t < 1.0)
    if deriv == 0:
        return tc**4 * (35 - 84 * tc + 70 * tc**2 - 20 * tc**3)
    if deriv == 1:
        v = 140 * tc**3 * (1 - tc) ** 3
    elif deriv == 2:
        v = 420 * tc**2 * (1 - tc) ** 2 * (1 - 2 * tc)
    elif deriv == 3:
        v = 840 * tc * (1 - tc) * (1 - 5 * tc + 5 * tc**2)
    else:
        raise ValueError("smoothstep derivatives available up to order 3")
    return np.where(inside, v, 0.0)


@dataclass(frozen=True)
class TubularChart:
    """Collar of half-width ``kappa`` around the reference surface.

    ``sigma(s)`` rises from 0 at ``alpha + kappa/2`` to 1 at ``alpha + kappa``.
    """

    surface: ReferenceSurface
    kappa: float

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.surface.alpha_omega + self.kappa >= 0:
            raise ValueError("kappa leaves no room between the collar and the surface")

    @property
    def s_lo(self):
        return self.surface.alpha_omega + 0.5 * self.kappa

    @property
    def s_hi(self):
        return self.surface.alpha_omega + self.kappa

    @property
    def eta_min(self):
        return self.surface.alpha_omega + self.kappa

    @property
    def eta_max(self):
        return self.surface.beta_omega - self.kappa

    def sigma(self, s, deriv=0):
        width = self.s_hi - self.s_lo
        t = (np.asarray(s, dtype=float) - self.s_lo) / width
        return smoothstep7(t, deriv) / width**deriv

    def check_displacement(self, eta):
        values = eta.values if isinstance(eta, ScalarField2D) else np.asarray(eta)
        lo, hi = float(np.min(values)), float(np.max(values))
        if not (self.eta_min < lo and hi < self.eta_max):
            raise DisplacementOutOfRange(
                f"displacement range [{lo:.6g}, {hi:.6g}] leaves the collar "
                f"(alpha+kappa = {self.eta_min:.6g})"
            )


def Phi(surf, s, y1, y2):
    """Tubular parameterisation ``phi(y) + s n(y)``."""
    f = surface_frame(surf, y1, y2)
    return f.phi + np.asarray(s)[..., None] * f.n


def tubular_coords(chart, x):
    """Invert ``Phi``: returns ``(s, (y1, y2), p)`` for points ``x`` (last axis 3)."""
    surf = chart.surface if isinstance(chart, TubularChart) else chart
    x = np.asarray(x, dtype=float)
    L1, L2 = surf.periods
    if surf.kind == "flat":
        s = x[..., 2].copy()
        y1 = np.mod(x[..., 0], L1)
        y2 = np.mod(x[..., 1], L2)
    else:
        r = np.hypot(x[..., 0], x[..., 1])
        s = r - surf.radius
        y1 = np.mod(np.arctan2(x[..., 1], x[..., 0]), L1)
        y2 = np.mod(x[..., 2], L2)
    if np.any(s <= surf.alpha_omega) or np.any(s >= surf.beta_omega):
        raise OutOfCollar("point outside the tubular neighbourhood")
    p = surface_frame(surf, y1, y2).phi
    return s, (y1, y2), p


def _eta_at(eta, y1, y2, order=(0, 0)):
    return trig_eval(eta.values, eta.grid, y1, y2, order)


def ale_map(chart, eta, z):
    """``psi_eta(z) = z + sigma(s(z)) eta(y(z)) n(y(z))``."""
    chart.check_displacement(eta)
    z = np.asarray(z, dtype=float)
    s, (y1, y2), _ = tubular_coords(chart, z)
    n = surface_frame(chart.surface, y1, y2).n
    return z + (chart.sigma(s) * _eta_at(eta, y1, y2))[..., None] * n


def ale_map_inverse(chart, eta, x, tol=1e-14, maxiter=100):
    """Exact inverse of :func:`ale_map` by a safeguarded scalar Newton solve.

    The normal line through a point is invariant, so only the distance
    ``s`` has to be recovered from ``S = s + sigma(s) eta(y)``.
    """
    chart.check_displacement(eta)
    x = np.asarray(x, dtype=float)
    S, (y1, y2), _ = tubular_coords(chart, x)
    e = _eta_at(eta, y1, y2)
    lo = S - np.abs(e)
    hi = S + np.abs(e)
    s = np.clip(S - e, lo, hi)
    for _ in range(maxiter):
        f = s + chart.sigma(s) * e - S
        lo = np.where(f < 0, s, lo)
        hi = np.where(f > 0, s, hi)
        df = 1.0 + chart.sigma(s, 1) * e
        step = s - f / df
        bad = (step <= lo) | (step >= hi) | ~np.isfinite(step)
        s_new = np.where(bad, 0.5 * (lo + hi), step)
        if np.all(np.abs(s_new - s) <= tol * (1 + np.abs(S))):
            s = s_new
            break
        s = s_new
    return Phi(chart.surface, s, y1, y2)


def ale_jacobian(chart, eta, z):
    """``det grad psi_eta`` at reference points ``z``.

    Writing ``psi = Phi(S(s, y), y)`` with ``S = s + sigma(s) eta(y)`` gives
    ``J = (1 + sigma'(s) eta) gamma(S) / gamma(s)``.
    """
    chart.check_displacement(eta)
    s, (y1, y2), _ = tubular_coords(chart, z)
    e = _eta_at(eta, y1, y2)
    frame = surface_frame(chart.surface, y1, y2)
    S = s + chart.sigma(s) * e
    return (1.0 + chart.sigma(s, 1) * e) * gamma_from_frame(frame, S) / gamma_from_frame(frame, s)
