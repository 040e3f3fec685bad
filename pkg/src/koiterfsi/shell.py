"""
Nonlinear Koiter shell with purely normal displacement.

Tensors are stored as arrays of shape ``(2, 2, *nodes)``.  The change of
metric ``G`` is quadratic and the change of curvature ``R`` cubic in the
displacement jet ``(eta, grad eta, hess eta)``; their directional derivatives
below are written out by hand, so they are exact and linear in the test jet.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import faults
from .discrete import ScalarField2D, spectral_derivative
from .geometry import Frame, gamma_derivative, gamma_from_frame, surface_frame

__all__ = [
    "ShellParams",
    "SymTensor2Field",
    "DisplacementJet",
    "jet_from_field",
    "node_frame",
    "deformed_tangents",
    "deformed_normal",
    "metric_change",
    "curvature_change",
    "metric_change_derivative",
    "curvature_change_derivative",
    "curvature_remainder",
    "elasticity_apply",
    "contract",
    "koiter_energy",
    "regularization_energy",
    "frechet_forms",
    "bending_terms",
    "simpson_tensor",
    "simpson_derivative",
    "assemble_dual",
    "elastic_residual",
    "plate_symbol",
]


@dataclass(frozen=True)
class ShellParams:
    """Shell thickness, Lame constants and the regularisation weight."""

    thickness: float = 1.0
    lame_lambda: float = 1.0
    lame_mu: float = 1.0
    reg_eps: float = 1e-3

    def __post_init__(self):
        if self.thickness <= 0 or self.lame_lambda <= 0 or self.lame_mu <= 0:
            raise ValueError("thickness and Lame constants must be positive")
        if self.reg_eps < 0:
            raise ValueError("regularisation weight must be nonnegative")

    @property
    def c_lambda(self):
        lam, mu = self.lame_lambda, self.lame_mu
        return 4 * lam * mu / (lam + 2 * mu)


@dataclass
class SymTensor2Field:
    """Symmetric 2x2 tensor per node, stored once as ``g11, g12, g22``."""

    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray

    @classmethod
    def from_array(cls, T):
        return cls(T[0, 0], 0.5 * (T[0, 1] + T[1, 0]), T[1, 1])

    def to_array(self):
        return np.array([[self.g11, self.g12], [self.g12, self.g22]])


@dataclass
class DisplacementJet:
    """Displacement with its first and second derivatives at the same nodes."""

    eta: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    grid: object = None

    def __add__(self, other):
        return DisplacementJet(self.eta + other.eta, self.grad + other.grad,
                               self.hess + other.hess, self.grid)

    def __sub__(self, other):
        return DisplacementJet(self.eta - other.eta, self.grad - other.grad,
                               self.hess - other.hess, self.grid)

    def scale(self, c):
        return DisplacementJet(c * self.eta, c * self.grad, c * self.hess, self.grid)


def jet_from_field(field, grid=None):
    """Spectral jet of a field (``ScalarField2D`` or raw array plus ``grid``)."""
    if isinstance(field, ScalarField2D):
        grid, v = field.grid, field.values
    else:
        v = np.asarray(field)
    d = lambda o: spectral_derivative(v, grid, o)
    grad = np.array([d((1, 0)), d((0, 1))])
    h12 = d((1, 1))
    hess = np.array([[d((2, 0)), h12], [h12, d((0, 2))]])
    return DisplacementJet(v, grad, hess, grid)


_FRAME_CACHE = {}


def node_frame(surf, grid):
    """Frame fields at the grid nodes (cached per surface and grid)."""
    key = (surf, grid)
    if key not in _FRAME_CACHE:
        if len(_FRAME_CACHE) > 32:
            _FRAME_CACHE.clear()
        _FRAME_CACHE[key] = surface_frame(surf, *grid.coords())
    return _FRAME_CACHE[key]


def _frame(surf, jet, y=None):
    if isinstance(surf, Frame):
        return surf
    if y is not None:
        return surface_frame(surf, y[0], y[1])
    return node_frame(surf, jet.grid)


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


def deformed_tangents(frame, jet):
    """``a_alpha(eta) = a_alpha + d_alpha eta n + eta d_alpha n`` as ``(2, *nodes, 3)``."""
    e = jet.eta[..., None]
    return np.array([frame.a[k] + jet.grad[k][..., None] * frame.n + e * frame.dn[k]
                     for k in range(2)])


def _tangent_derivatives(frame, jet, with_reference=True):
    # d_alpha a_beta(eta); drop the reference part for the linear (test) jet
    e = jet.eta[..., None]
    out = np.empty((2, 2) + np.shape(jet.eta) + (3,), dtype=np.result_type(jet.eta, float))
    for a in range(2):
        for b in range(2):
            v = (jet.hess[a, b][..., None] * frame.n + jet.grad[a][..., None] * frame.dn[b]
                 + jet.grad[b][..., None] * frame.dn[a] + e * frame.d2n[a, b])
            out[a, b] = frame.d2phi[a, b] + v if with_reference else v
    return out


def _tangents_linear(frame, jet):
    e = jet.eta[..., None]
    return np.array([jet.grad[k][..., None] * frame.n + e * frame.dn[k] for k in range(2)])


def deformed_normal(frame, jet):
    """Unnormalised deformed normal ``a1(eta) x a2(eta)``."""
    t = deformed_tangents(frame, jet)
    return np.cross(t[0], t[1])


def metric_change(surf, jet, y=None):
    """Change of metric ``G(eta)``.

    ``G_ab = d_a eta d_b eta + eta (a_a . d_b n + a_b . d_a n) + eta^2 d_a n . d_b n``
    """
    f = _frame(surf, jet, y)
    G = np.empty((2, 2) + np.shape(jet.eta), dtype=np.result_type(jet.eta, float))
    for a in range(2):
        for b in range(2):
            G[a, b] = (jet.grad[a] * jet.grad[b]
                       + jet.eta * (_dot(f.a[a], f.dn[b]) + _dot(f.a[b], f.dn[a]))
                       + jet.eta**2 * _dot(f.dn[a], f.dn[b]))
    return G


def metric_change_derivative(surf, jet, xi_jet, y=None):
    """Directional derivative ``G'(eta) xi``."""
    f = _frame(surf, jet, y)
    G = np.empty((2, 2) + np.shape(np.asarray(jet.eta) * xi_jet.eta),
                 dtype=np.result_type(jet.eta, xi_jet.eta, float))
    for a in range(2):
        for b in range(2):
            G[a, b] = (jet.grad[a] * xi_jet.grad[b] + xi_jet.grad[a] * jet.grad[b]
                       + xi_jet.eta * (_dot(f.a[a], f.dn[b]) + _dot(f.a[b], f.dn[a]))
                       + 2 * jet.eta * xi_jet.eta * _dot(f.dn[a], f.dn[b]))
    return G


def curvature_change(surf, jet, y=None):
    """Change of curvature ``R(eta)``.

    ``R_ab = |a1 x a2|^-1 d_a a_b(eta) . n(eta) - d_a a_b . n``
    """
    f = _frame(surf, jet, y)
    nd = deformed_normal(f, jet)
    dt = _tangent_derivatives(f, jet)
    area = f.dS
    R = np.empty((2, 2) + np.shape(jet.eta), dtype=np.result_type(jet.eta, float))
    for a in range(2):
        for b in range(2):
            R[a, b] = _dot(dt[a, b], nd) / area - _dot(f.d2phi[a, b], f.n)
    return R


def curvature_change_derivative(surf, jet, xi_jet, y=None):
    """Directional derivative ``R'(eta) xi`` (exact; ``R`` is cubic)."""
    f = _frame(surf, jet, y)
    t = deformed_tangents(f, jet)
    tl = _tangents_linear(f, xi_jet)
    nd = np.cross(t[0], t[1])
    ndl = np.cross(tl[0], t[1]) + np.cross(t[0], tl[1])
    dt = _tangent_derivatives(f, jet)
    dtl = _tangent_derivatives(f, xi_jet, with_reference=False)
    area = f.dS
    R = np.empty((2, 2) + np.shape(nd)[:-1], dtype=np.result_type(nd, ndl))
    for a in range(2):
        for b in range(2):
            R[a, b] = (_dot(dtl[a, b], nd) + _dot(dt[a, b], ndl)) / area
    return R


def _no_hess(jet):
    return DisplacementJet(jet.eta, jet.grad, np.zeros_like(jet.hess), jet.grid)


def curvature_remainder(surf, jet, y=None):
    """Lower-order part ``P0(eta, grad eta)`` of ``R = gamma(eta) hess + P0``.

    ``R`` is affine in the Hessian with coefficient ``gamma(eta)``, so ``P0`` is
    ``R`` evaluated with the Hessian removed.
    """
    return curvature_change(surf, _no_hess(jet), y)


def elasticity_apply(surf, params, E, y=None, A=None):
    """``A_el E = c_lambda (A:E) A + 4 mu A E A`` with the contravariant metric ``A``.

    ``surf`` may be a :class:`Frame`, a surface (with ``y``) or ``None`` when
    ``A`` is passed directly.
    """
    if A is None:
        if isinstance(surf, Frame):
            A = surf.A
        else:
            A = surface_frame(surf, y[0], y[1]).A
    E = np.asarray(E)
    tr = np.einsum("ab...,ab...->...", A, E)
    AEA = np.einsum("ac...,cd...,db...->ab...", A, E, A)
    return params.c_lambda * tr * A + 4 * params.lame_mu * AEA


def contract(S, T):
    """Pointwise double contraction ``S:T``."""
    return np.einsum("ab...,ab...->...", S, T)


def koiter_energy(surf, params, jet):
    """Membrane and bending energies ``(h/4) int AG:G`` and ``(h^3/48) int AR:R``."""
    f = _frame(surf, jet)
    grid = jet.grid
    G = metric_change(f, jet)
    R = curvature_change(f, jet)
    h = params.thickness
    mem = h / 4 * np.sum(contract(elasticity_apply(f, params, G), G)) * grid.cell_area
    ben = h**3 / 48 * np.sum(contract(elasticity_apply(f, params, R), R)) * grid.cell_area
    return float(np.real(mem)), float(np.real(ben))


def _third_symbol(grid):
    from .discrete import _odd_wavenumbers

    k1, k2 = _odd_wavenumbers(grid)
    return (k1**2 + k2**2) ** 3


def regularization_energy(params, field):
    """``(eps/2) ||grad^3 eta||^2``."""
    grid = field.grid
    spec = np.abs(np.fft.fft2(field.values)) ** 2
    val = np.sum(_third_symbol(grid) * spec) * grid.cell_area / field.values.size
    return 0.5 * params.reg_eps * float(val)


def frechet_forms(surf, params, jet, xi):
    """Membrane and bending forms ``(a_m, a_b)`` of ``eta`` tested with ``xi``.

    ``a_m = (h/2) int A G(eta) : G'(eta) xi`` and
    ``a_b = (h^3/24) int A R(eta) : R'(eta) xi``.
    """
    f = _frame(surf, jet)
    xj = xi if isinstance(xi, DisplacementJet) else jet_from_field(xi)
    da = jet.grid.cell_area
    h = params.thickness
    G = metric_change(f, jet)
    R = curvature_change(f, jet)
    am = h / 2 * np.sum(contract(elasticity_apply(f, params, G), metric_change_derivative(f, jet, xj)))
    ab = h**3 / 24 * np.sum(contract(elasticity_apply(f, params, R),
                                     curvature_change_derivative(f, jet, xj)))
    return am * da, ab * da


def bending_terms(surf, params, jet, xi):
    """The five pieces of ``a_b`` after splitting ``R = gamma hess + P0``.

    With ``R' xi = gamma hess(xi) + gamma'(eta) xi hess(eta) + P0' xi``:

    1. ``A(gamma hess eta) : gamma hess xi``
    2. ``A(gamma hess eta) : gamma' xi hess eta``
    3. ``A(gamma hess eta) : P0' xi + A P0 : gamma' xi hess eta``
    4. ``A P0 : gamma hess xi``
    5. ``A P0 : P0' xi``

    each integrated and scaled by ``h^3/24``.
    """
    f = _frame(surf, jet)
    xj = xi if isinstance(xi, DisplacementJet) else jet_from_field(xi)
    g = gamma_from_frame(f, jet.eta)
    dg = gamma_derivative(f, jet.eta) * xj.eta
    main = g * jet.hess
    P0 = curvature_remainder(f, jet)
    P0d = curvature_change_derivative(f, _no_hess(jet), _no_hess(xj))
    Am, Ap = elasticity_apply(f, params, main), elasticity_apply(f, params, P0)
    c = params.thickness**3 / 24 * jet.grid.cell_area
    terms = (
        contract(Am, g * xj.hess),
        contract(Am, dg * jet.hess),
        contract(Am, P0d) + contract(Ap, dg * jet.hess),
        contract(Ap, g * xj.hess),
        contract(Ap, P0d),
    )
    return tuple(c * np.sum(t) for t in terms)


SIMPSON = (1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0)


def _simpson_weights():
    if faults.active("simpson_weights"):
        return (1.0 / 6.0, 4.1 / 6.0, 1.0 / 6.0)
    return SIMPSON


def simpson_tensor(surf, which, jet_a, jet_b, xi_jet):
    """Newton-Cotes secant derivative ``T'(eta_a, eta_b) xi`` (pointwise tensor).

    Simpson's rule on the segment from ``eta_a`` to ``eta_b``; because ``G`` and
    ``R`` have degree at most three the rule integrates ``T'`` exactly, so
    ``T'(eta_a, eta_b)(eta_b - eta_a) = T(eta_b) - T(eta_a)``.
    """
    f = _frame(surf, jet_a)
    deriv = {"G": metric_change_derivative, "R": curvature_change_derivative}[which]
    mid = (jet_a + jet_b).scale(0.5)
    wa, wm, wb = _simpson_weights()
    return (wa * deriv(f, jet_a, xi_jet) + wm * deriv(f, mid, xi_jet)
            + wb * deriv(f, jet_b, xi_jet))


def simpson_derivative(surf, params, which, jet_a, jet_b, xi):
    """Secant form ``c_T int A T(eta_b) : T'(eta_a, eta_b) xi``.

    ``c_T`` is ``h/2`` for ``T = G`` and ``h^3/24`` for ``T = R``; the stress is
    taken at the new state ``eta_b`` as in the structure sub-step.
    """
    f = _frame(surf, jet_a)
    xj = xi if isinstance(xi, DisplacementJet) else jet_from_field(xi)
    T = {"G": metric_change, "R": curvature_change}[which](f, jet_b)
    c = params.thickness / 2 if which == "G" else params.thickness**3 / 24
    val = np.sum(contract(elasticity_apply(f, params, T), simpson_tensor(f, which, jet_a, jet_b, xj)))
    return c * val * jet_a.grid.cell_area


def _basis_jets(shape):
    z = np.zeros(shape)
    o = np.ones(shape)
    zg = np.zeros((2,) + shape)
    zh = np.zeros((2, 2) + shape)
    yield "c0", None, DisplacementJet(o, zg, zh)
    for k in range(2):
        g = zg.copy()
        g[k] = 1.0
        yield "c1", k, DisplacementJet(z, g, zh)
    for a, b in ((0, 0), (1, 1), (0, 1)):
        hh = zh.copy()
        hh[a, b] = 1.0
        hh[b, a] = 1.0
        yield "c2", (a, b), DisplacementJet(z, zg, hh)


def assemble_dual(S, surf, jet_point, which, grid, weights=(1.0,), points=None):
    """Field ``r`` with ``<r, xi> = int S : T'(eta) xi`` for every grid field ``xi``.

    ``T'`` is linear in the test jet, so its coefficients against ``xi``,
    ``grad xi`` and ``hess xi`` are read off from unit jets; moving the
    derivatives onto the coefficients uses the exact skew-adjointness of the
    spectral operators.  ``points``/``weights`` allow a weighted sum of
    derivatives at several states (the Simpson secant).
    """
    f = _frame(surf, jet_point) if not isinstance(surf, Frame) else surf
    deriv = {"G": metric_change_derivative, "R": curvature_change_derivative}[which]
    points = [jet_point] if points is None else points
    shape = grid.shape
    r = 0.0
    for kind, idx, bj in _basis_jets(shape):
        c = 0.0
        for w, pj in zip(weights, points):
            c = c + w * contract(S, deriv(f, pj, bj))
        if kind == "c0":
            r = r + c
        elif kind == "c1":
            r = r - spectral_derivative(c, grid, (1, 0) if idx == 0 else (0, 1))
        else:
            a, b = idx
            order = (a == 0) + (b == 0), (a == 1) + (b == 1)
            r = r + spectral_derivative(c, grid, order)
    return r


def elastic_residual(surf, params, field):
    """``L2`` gradient of the regularised Koiter energy at ``field``.

    Satisfies ``<r, xi> = a_m(eta, xi) + a_b(eta, xi) + eps <grad^3 eta, grad^3 xi>``.
    """
    grid = field.grid
    jet = jet_from_field(field)
    f = _frame(surf, jet)
    h = params.thickness
    SG = h / 2 * elasticity_apply(f, params, metric_change(f, jet))
    SR = h**3 / 24 * elasticity_apply(f, params, curvature_change(f, jet))
    r = assemble_dual(SG, f, jet, "G", grid) + assemble_dual(SR, f, jet, "R", grid)
    r = r + _reg_apply(params, field.values, grid)
    return ScalarField2D(grid, r)


def _reg_apply(params, values, grid):
    if params.reg_eps == 0:
        return 0.0
    if np.iscomplexobj(values):
        return _reg_apply(params, values.real, grid) + 1j * _reg_apply(params, values.imag, grid)
    out = np.fft.ifft2(_third_symbol(grid) * np.fft.fft2(values))
    return params.reg_eps * (out if np.iscomplexobj(values) else out.real)


def plate_symbol(surf, params, grid):
    """Fourier symbol of the shell operator linearised about ``eta = 0``.

    Exact for the flat channel; for curved surfaces the node-averaged metric
    is used, which is adequate as a preconditioner.
    """
    from .discrete import _odd_wavenumbers

    k1, k2 = _odd_wavenumbers(grid)
    f = node_frame(surf, grid)
    A11, A22 = float(np.mean(f.A[0, 0])), float(np.mean(f.A[1, 1]))
    q = A11 * k1**2 + A22 * k2**2
    lam_part = params.c_lambda * q**2
    mu_part = 4 * params.lame_mu * (A11**2 * k1**4 + 2 * A11 * A22 * k1**2 * k2**2 + A22**2 * k2**4)
    bend = params.thickness**3 / 24 * (lam_part + mu_part)
    zero = DisplacementJet(np.zeros(grid.shape), np.zeros((2,) + grid.shape),
                           np.zeros((2, 2) + grid.shape), grid)
    one = DisplacementJet(np.ones(grid.shape), np.zeros((2,) + grid.shape),
                          np.zeros((2, 2) + grid.shape), grid)
    C0 = metric_change_derivative(f, zero, one)
    mem = params.thickness / 2 * float(np.mean(contract(elasticity_apply(f, params, C0), C0)))
    return bend + mem + params.reg_eps * (k1**2 + k2**2) ** 3
