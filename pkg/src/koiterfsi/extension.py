"""
Weighted corrector, discrete Bogovskii operator and solenoidal extension of
boundary data into the moving fluid domain.

The extension of a boundary datum ``xi`` first removes its weighted mean
(:func:`corrector`) so the repaired field can be divergence free, then builds
a field whose trace on the deformed interface is ``xi0 n`` and which vanishes
below the collar annulus ``alpha + kappa/2 < s < alpha + kappa``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discrete import (ScalarField2D, diff_quotient, lp_norm, mollify, spectral_derivative,
                       spectral_shift, trig_eval)
from .errors import NonzeroMean, UnsupportedGeometry, ZeroWeight
from .geometry import surface_frame, gamma_from_frame, tubular_coords
from .staggered import CirculantBlockSolver, FluidGrid, StaggeredField3D, kron3, periodic_ops, vertical_ops

__all__ = [
    "CollarAnnulus",
    "weight_lambda",
    "weight_l1",
    "corrector",
    "bogovskii",
    "bogovskii_h1_ratio",
    "solenoidal_extend",
    "extension_residuals",
    "smooth_extend",
    "commutator_report",
]


def _values(f):
    return f.values if isinstance(f, ScalarField2D) else np.asarray(f)


# ---------------------------------------------------------------- weight and corrector


def weight_lambda(chart, eta, x):
    """Weight ``exp((s - eta(y)) div n) sigma'(s)`` at points ``x`` (last axis 3).

    Vanishes outside the collar annulus because ``sigma'`` does.
    """
    s, (y1, y2), _ = tubular_coords(chart, x)
    e = trig_eval(_values(eta), eta.grid, y1, y2)
    dn = chart.surface.div_normal(y1, y2)
    return np.exp((s - e) * dn) * chart.sigma(s, 1)


def _s_quadrature(chart, n):
    # Gauss-Legendre on the annulus; sigma' is a polynomial there
    t, w = np.polynomial.legendre.leggauss(n)
    a, b = chart.s_lo, chart.s_hi
    return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w


def _column_weights(chart, eta, n_s=12):
    """``int lambda(s, y) gamma(s) dS ds`` for each grid column ``y``."""
    grid = eta.grid
    y1, y2 = grid.coords()
    f = surface_frame(chart.surface, y1, y2)
    dn = chart.surface.div_normal(y1, y2)
    e = _values(eta)
    out = np.zeros(grid.shape)
    for s, w in zip(*_s_quadrature(chart, n_s)):
        out += w * np.exp((s - e) * dn) * chart.sigma(s, 1) * gamma_from_frame(f, s)
    return out * f.dS * grid.cell_area


def weight_l1(chart, eta, n_s=12):
    """``L1`` norm of the weight over the annulus."""
    return float(np.sum(_column_weights(chart, eta, n_s)))


def corrector(chart, eta, xi, n_s=12):
    """Weighted mean of ``xi`` (constant along normals) over the collar annulus.

    Raises
    ------
    ZeroWeight
        If the weight has (numerically) vanishing mass.
    """
    w = _column_weights(chart, eta, n_s)
    total = float(np.sum(w))
    if not total > 1e-14:
        raise ZeroWeight(f"weight mass {total:.3e} is not positive")
    return float(np.sum(w * _values(xi)) / total)


# ---------------------------------------------------------------- annulus and Bogovskii


@dataclass(frozen=True)
class CollarAnnulus:
    """MAC grid of the collar annulus ``s_lo < s < s_hi`` over ``omega``."""

    chart: object
    grid: FluidGrid

    @classmethod
    def build(cls, chart, n1, n2, nz):
        if chart.surface.kind != "flat":
            raise UnsupportedGeometry("the discrete annulus is built for the flat channel")
        L1, L2 = chart.surface.periods
        g = FluidGrid(n1, n2, nz, depth=chart.s_hi - chart.s_lo, s_top=chart.s_hi, L1=L1, L2=L2)
        return cls(chart, g)

    @classmethod
    def from_fluid_grid(cls, chart, fgrid):
        """Annulus cells of a reference fluid grid; the annulus must be cell aligned."""
        k_lo = (chart.s_lo - fgrid.s_bot) / fgrid.hz
        k_hi = (chart.s_hi - fgrid.s_bot) / fgrid.hz
        if abs(k_lo - round(k_lo)) > 1e-9 or abs(k_hi - round(k_hi)) > 1e-9:
            raise ValueError("collar annulus is not aligned with the fluid cells "
                             "(kappa/2 must be a multiple of the vertical spacing)")
        nz = int(round(k_hi)) - int(round(k_lo))
        ann = cls.build(chart, fgrid.n1, fgrid.n2, nz)
        return ann

    def level_offset(self, fgrid):
        """Index of the lowest annulus cell inside ``fgrid``."""
        return int(round((self.chart.s_lo - fgrid.s_bot) / fgrid.hz))


class _BogovskiiOps:
    _cache = {}

    def __new__(cls, grid):
        obj = cls._cache.get(grid)
        if obj is None:
            obj = super().__new__(cls)
            obj._build(grid)
            cls._cache[grid] = obj
        return obj

    def _build(self, g):
        P = periodic_ops(g.n1, g.h1)
        Q = periodic_ops(g.n2, g.h2)
        Z = vertical_ops(g.nz, g.hz)
        I1, I2, Iz = P["I"], Q["I"], Z["I"]
        E = Z["E3i"]
        vol = g.vol
        fw = np.repeat(g.face_weights(), g.M)
        cw = np.full(g.nz * g.M, vol)
        # gradient pieces with weights (cell-level or face-level control volumes)
        G1 = [(kron3(Iz, P["Dbwd"], I2), cw), (kron3(Iz, I1, Q["Dfwd"]), cw),
              (kron3(Z["Dc2f"], I1, I2), vol * fw)]
        G2 = [(kron3(Iz, P["Dfwd"], I2), cw), (kron3(Iz, I1, Q["Dbwd"]), cw),
              (kron3(Z["Dc2f"], I1, I2), vol * fw)]
        G3 = [(kron3(E, P["Dfwd"], I2), vol * fw), (kron3(E, I1, Q["Dfwd"]), vol * fw),
              (kron3(Z["Df2c"] @ E, I1, I2), cw)]
        self.grads = (G1, G2, G3)
        lap = [sum(G.T @ sp.diags(w) @ G for G, w in Gs) for Gs in self.grads]
        self.L = sp.block_diag(lap, format="csr")
        self.D = sp.hstack([kron3(Iz, P["Dbwd"], I2), kron3(Iz, I1, Q["Dbwd"]),
                            kron3(Z["Df2c"] @ E, I1, I2)], format="csr")
        self.E = E
        self.n_u = (3 * g.nz - 1) * g.M
        self.mass = np.concatenate([cw, cw, vol * np.ones((g.nz - 1) * g.M)])
        self.K = sp.bmat([[self.L, -vol * self.D.T], [-vol * self.D, None]], format="csr")
        self.solver = CirculantBlockSolver(self.K, 4 * g.nz - 1, g.n1, g.n2,
                                           singular_zero_mode=True)


def bogovskii(annulus, f):
    """Discrete right inverse of the divergence with zero boundary values.

    Minimises the Dirichlet energy ``|grad B|^2`` subject to ``div B = f`` on
    every annulus cell, with ``B = 0`` on both annulus walls.

    Parameters
    ----------
    annulus : CollarAnnulus
    f : array, shape ``(nz, n1, n2)``
        Cell values with zero mean.

    Returns
    -------
    StaggeredField3D
        ``B`` on the annulus grid (``u3`` includes the two zero wall levels);
        ``p`` holds the Lagrange multiplier.

    Raises
    ------
    NonzeroMean
    """
    g = annulus.grid
    f = np.asarray(f, dtype=float)
    if f.shape != (g.nz, g.n1, g.n2):
        raise ValueError(f"f has shape {f.shape}, expected {(g.nz, g.n1, g.n2)}")
    rms = float(np.sqrt(np.mean(f**2)))
    if rms == 0.0:
        return StaggeredField3D.zeros(g)
    if abs(float(np.mean(f))) > 1e-10 * rms:
        raise NonzeroMean(f"mean of f is {np.mean(f):.3e} (rms {rms:.3e})")
    ops = _BogovskiiOps(g)
    rhs = np.concatenate([np.zeros(ops.n_u), -g.vol * f.ravel()])
    x = ops.solver.solve(rhs)
    # one refinement sweep removes the growth of round-off with the grid
    x += ops.solver.solve(rhs - ops.K @ x)
    n = g.nz * g.M
    B1 = x[:n].reshape(g.nz, g.n1, g.n2)
    B2 = x[n:2 * n].reshape(g.nz, g.n1, g.n2)
    B3 = np.zeros((g.nz + 1, g.n1, g.n2))
    B3[1:-1] = x[2 * n:ops.n_u].reshape(g.nz - 1, g.n1, g.n2)
    p = x[ops.n_u:].reshape(g.nz, g.n1, g.n2)
    return StaggeredField3D(g, B1, B2, B3, p - p.mean())


def _bog_vector(B):
    return np.concatenate([B.u1.ravel(), B.u2.ravel(), B.u3[1:-1].ravel()])


def bogovskii_divergence(annulus, B):
    """Cell divergence of a field on the annulus grid."""
    ops = _BogovskiiOps(annulus.grid)
    return (ops.D @ _bog_vector(B)).reshape(annulus.grid.nz, annulus.grid.n1, annulus.grid.n2)


def bogovskii_h1_ratio(annulus, f, B=None):
    """``|B|_{H1} / |f|_{L2}``, the empirical constant of the discrete operator."""
    B = bogovskii(annulus, f) if B is None else B
    ops = _BogovskiiOps(annulus.grid)
    x = _bog_vector(B)
    h1 = float(np.dot(ops.mass * x, x) + x @ (ops.L @ x))
    l2 = float(np.sum(np.asarray(f) ** 2) * annulus.grid.vol)
    return np.sqrt(h1 / l2) if l2 > 0 else 0.0


# ---------------------------------------------------------------- solenoidal extension

_HPOS = {"c": (0.0, 0.0), "x": (0.5, 0.0), "y": (0.0, 0.5)}


def _check_flat(chart):
    if chart.surface.kind != "flat":
        raise UnsupportedGeometry("solenoidal extension into the fluid box needs the flat channel")


def _explicit_field(chart, eta, xi0, grid):
    """Sample ``(-sigma'(x3) grad Phi, sigma(x3) xi0)`` with ``lap Phi = xi0`` at ``psi_eta`` of the nodes."""
    om = eta.grid
    k1, k2 = om.wavenumbers()
    q = -(k1**2 + k2**2)
    q[0, 0] = 1.0
    Phi_hat = np.fft.fft2(xi0) / q
    Phi_hat[0, 0] = 0.0
    Phi = np.fft.ifft2(Phi_hat).real
    d1 = spectral_derivative(Phi, om, (1, 0))
    d2 = spectral_derivative(Phi, om, (0, 1))
    e = _values(eta)
    sc = grid.s_centers[:, None, None]
    sf = grid.s_faces[:, None, None]
    sig = chart.sigma
    ex = spectral_shift(e, om, _HPOS["x"])
    ey = spectral_shift(e, om, _HPOS["y"])
    x3 = sc + sig(sc) * ex[None]
    u1 = -sig(x3, 1) * spectral_shift(d1, om, _HPOS["x"])[None]
    x3 = sc + sig(sc) * ey[None]
    u2 = -sig(x3, 1) * spectral_shift(d2, om, _HPOS["y"])[None]
    x3 = sf + sig(sf) * e[None]
    u3 = sig(x3) * xi0[None]
    return StaggeredField3D(grid, u1, u2, u3)


def _variational_field(chart, eta, xi0, grid):
    """Reference-annulus Bogovskii repair followed by the discrete Piola pull-back."""
    from .solver.fluid import ALEMetric, FluidOperators

    ann = CollarAnnulus.from_fluid_grid(chart, grid)
    k0 = ann.level_offset(grid)
    ops = FluidOperators(grid)
    sf = chart.sigma(grid.s_faces)
    F3 = sf[:, None, None] * xi0[None]
    # divergence of the naive flux, restricted to the annulus cells
    div = (F3[1:] - F3[:-1]) / grid.hz
    f = -div[k0:k0 + ann.grid.nz]
    B = bogovskii(ann, f - f.mean()) if np.any(f) else StaggeredField3D.zeros(ann.grid)
    U1 = np.zeros((grid.nz, grid.n1, grid.n2))
    U2 = np.zeros_like(U1)
    U1[k0:k0 + ann.grid.nz] = B.u1
    U2[k0:k0 + ann.grid.nz] = B.u2
    F3[k0:k0 + ann.grid.nz + 1] += B.u3
    met = ALEMetric(chart, grid, eta)
    J1 = met.get("c", "x")[0]
    J2 = met.get("c", "y")[0]
    _, a1, a2 = met.get("f", "c")
    u1 = U1.ravel() / J1
    u2 = U2.ravel() / J2
    u3 = F3.ravel() + a1 * (ops.A_u1_f @ u1) + a2 * (ops.A_u2_f @ u2)
    shp = (grid.nz, grid.n1, grid.n2)
    return StaggeredField3D(grid, u1.reshape(shp), u2.reshape(shp),
                            u3.reshape(grid.nz + 1, grid.n1, grid.n2))


def _aligned(chart, grid):
    k_lo = (chart.s_lo - grid.s_bot) / grid.hz
    k_hi = (chart.s_hi - grid.s_bot) / grid.hz
    ok = abs(k_lo - round(k_lo)) < 1e-9 and abs(k_hi - round(k_hi)) < 1e-9
    return ok and round(k_hi) - round(k_lo) >= 2


def solenoidal_extend(chart, eta, xi, grid, repair="auto", return_mean=False):
    """Divergence-free extension of ``xi - corrector(xi)`` into the fluid box.

    Parameters
    ----------
    chart : TubularChart
    eta : ScalarField2D
        Interface displacement (collar bounds are checked).
    xi : ScalarField2D
        Boundary datum on the same grid as ``eta``.
    grid : FluidGrid
        Reference fluid grid; the result holds Eulerian velocity components
        at the ``psi_eta`` images of its MAC nodes.
    repair : {"auto", "variational", "explicit"}
        ``"variational"`` repairs the naive normal extension with
        :func:`bogovskii` on the reference annulus and is discretely
        divergence free to round-off; it needs the annulus to span at least
        two whole cells.  ``"explicit"`` samples a smooth closed-form
        divergence-free field, whose discrete divergence is only consistent
        (it shrinks once the collar transition is resolved).  ``"auto"``
        picks ``"variational"`` whenever the grid allows it.
    return_mean : bool
        Also return the subtracted corrector value.

    Returns
    -------
    StaggeredField3D
        Top ``u3`` level equals ``xi0``; every node with ``s <= s_lo`` is zero.
    """
    _check_flat(chart)
    chart.check_displacement(eta)
    xv = _values(xi)
    if xv.shape != eta.grid.shape or (grid.n1, grid.n2) != eta.grid.shape:
        raise ValueError("xi, eta and the fluid grid must share the horizontal grid")
    c = corrector(chart, eta, xi)
    xi0 = xv - c
    if repair == "auto":
        repair = "variational" if _aligned(chart, grid) else "explicit"
    if repair == "explicit":
        out = _explicit_field(chart, eta, xi0, grid)
    elif repair == "variational":
        out = _variational_field(chart, eta, xi0, grid)
    else:
        raise ValueError(f"unknown repair {repair!r}")
    return (out, c) if return_mean else out


def extension_residuals(chart, eta, u, xi):
    """Divergence, trace and support errors of an extended field.

    Returns a dict with ``divergence`` (max cell value of ``|div^eta u|``),
    ``trace`` (max over interface nodes of ``|u3 - xi0|``) and ``support``
    (max ``|u|`` over nodes at or below ``s_lo``).
    """
    from .solver.fluid import ALEMetric, FluidOperators, divergence_residual

    grid = u.grid
    ops = FluidOperators(grid)
    met = ALEMetric(chart, grid, eta)
    xi0 = _values(xi) - corrector(chart, eta, xi)
    lo_c = grid.s_centers <= chart.s_lo + 1e-14
    lo_f = grid.s_faces <= chart.s_lo + 1e-14
    supp = max(float(np.max(np.abs(u.u1[lo_c]), initial=0.0)),
               float(np.max(np.abs(u.u2[lo_c]), initial=0.0)),
               float(np.max(np.abs(u.u3[lo_f]), initial=0.0)))
    return {
        "divergence": divergence_residual(ops, met, u),
        "trace": float(np.max(np.abs(u.top - xi0))),
        "support": supp,
    }


def smooth_extend(chart, eta, xi, delta, grid, repair="auto"):
    """:func:`solenoidal_extend` of the Gaussian mollification of ``xi``."""
    return solenoidal_extend(chart, eta, mollify(xi, delta), grid, repair=repair)


# ---------------------------------------------------------------- commutator diagnostic


def _w13(field):
    g = field.grid
    v = field.values
    parts = [lp_norm(v, g, 3)]
    parts += [lp_norm(spectral_derivative(v, g, o), g, 3) for o in ((1, 0), (0, 1))]
    return float(np.sum(np.array(parts) ** 3) ** (1 / 3))


def commutator_report(chart, eta, u, xi, s, h, direction=0, theta=0.99):
    """Pairing of ``u`` with the extension of ``D^s_h xi`` against its majorant.

    Returns
    -------
    dict
        ``lhs = int J u . Test(D^s_h xi - cor)``, ``majorant =
        (h^(theta - s) + |D^s_h eta|_{W^{1,3}}) |u|_{H^1} |xi|_{L^2}`` and
        ``ratio = |lhs| / majorant``.
    """
    from .solver.fluid import ALEMetric, FluidOperators, gradient_pieces, mass_weights

    if not 0.0 < s < 0.5:
        raise ValueError("order s must lie in (0, 1/2)")
    grid = u.grid
    dxi = diff_quotient(xi, s, h, direction)
    T = solenoidal_extend(chart, eta, dxi, grid)
    ops = FluidOperators(grid)
    met = ALEMetric(chart, grid, eta)
    m = mass_weights(ops, met)
    x = u.velocity_vector()
    lhs = float(np.dot(m * x, T.velocity_vector()))
    mats, w = gradient_pieces(ops, met)
    grad2 = sum(float(np.dot(w[k] * (M @ x), M @ x)) for k, M in mats.items())
    u_h1 = np.sqrt(float(np.dot(m * x, x)) + grad2)
    xi_l2 = lp_norm(xi.values, xi.grid, 2)
    deta = diff_quotient(eta, s, h, direction)
    maj = (abs(h) ** (theta - s) + _w13(deta)) * u_h1 * xi_l2
    return {"lhs": lhs, "majorant": maj, "ratio": abs(lhs) / maj if maj > 0 else 0.0,
            "h": h, "s": s}
