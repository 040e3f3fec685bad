"""
Regularity and energy diagnostics evaluated on recorded trajectories.
"""
from __future__ import annotations

import numpy as np

from ..discrete import (ScalarField2D, _dq_values, integrate, shift_sup, sobolev_norm_hs,
                        spectral_derivative)
from ..errors import KornPreconditionError
from ..geometry import gamma_from_frame
from ..shell import elasticity_apply, frechet_forms, jet_from_field, node_frame
from .fluid import ALEMetric, FluidOperators, divergence_residual, gradient_pieces

__all__ = [
    "korn_check",
    "elasticity_floor",
    "monitor_baselines",
    "w14_norm",
    "weighted_h2",
    "hessian_shift_sup",
    "structure_defect",
    "regularity_diagnostics",
]


def korn_check(fluid, shell, chart, tol=1e-8):
    """Both sides of ``|grad u|^2 = 2 |D u|^2`` in the transformed metric.

    Parameters
    ----------
    fluid : FluidState or StaggeredField3D
    shell : ShellState
        Supplies the interface velocity ``v`` and, unless ``fluid`` records
        the geometry of its divergence constraint, the displacement.
    chart : TubularChart
    tol : float
        Admissible trace and divergence residuals (relative to the field size).

    Returns
    -------
    (lhs, rhs, gap)
        ``int J |grad^eta u|^2``, ``2 int J |D^eta u|^2`` and ``lhs - rhs``.

    Raises
    ------
    KornPreconditionError
        ``u3`` does not vanish on the bottom wall, the interface level differs
        from ``v``, or ``u`` is not divergence free.
    """
    u = getattr(fluid, "u", fluid)
    grid = u.grid
    scale = max(float(np.max(np.abs(u.velocity_vector()))), 1e-300)
    if np.max(np.abs(u.u3[0])) > tol * scale:
        raise KornPreconditionError("normal velocity does not vanish on the bottom wall")
    if np.max(np.abs(u.top - shell.vel.values)) > tol * scale:
        raise KornPreconditionError("interface velocity differs from the shell velocity")
    ops = FluidOperators(grid)
    geom = getattr(fluid, "eta", None)
    met = ALEMetric(chart, grid, shell.eta if geom is None else geom)
    div = divergence_residual(ops, met, u)
    if div > tol * scale / min(grid.h1, grid.h2, grid.hz):
        raise KornPreconditionError(f"velocity is not divergence free (residual {div:.3e})")
    mats, w = gradient_pieces(ops, met)
    x = u.velocity_vector()
    g = {k: M @ x for k, M in mats.items()}
    lhs = sum(float(np.dot(w[k], g[k] ** 2)) for k in g)
    rhs = sum(2 * float(np.dot(w[(i, i)], g[(i, i)] ** 2)) for i in range(3))
    for i, j in ((0, 1), (0, 2), (1, 2)):
        rhs += float(np.dot(w[(i, j)], (g[(i, j)] + g[(j, i)]) ** 2))
    return lhs, rhs, lhs - rhs


def elasticity_floor(surf, params, grid):
    """Smallest eigenvalue of the elasticity tensor on symmetric matrices (over nodes).

    Uses the orthonormal basis ``e11, e22, (e12 + e21)/sqrt 2`` of symmetric matrices.
    """
    f = node_frame(surf, grid)
    basis = [np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [0.0, 1.0]]),
             np.array([[0.0, 1.0], [1.0, 0.0]]) / np.sqrt(2)]
    shape = grid.shape
    M = np.empty(shape + (3, 3))
    for b, Eb in enumerate(basis):
        E = np.broadcast_to(Eb[:, :, None, None], (2, 2) + shape)
        S = elasticity_apply(f, params, E)
        for a, Ea in enumerate(basis):
            M[..., a, b] = np.einsum("ab,ab...->...", Ea, S)
    return float(np.min(np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))))


def monitor_baselines(surf, params, grid, energy0):
    """Energy-calibrated ceilings for the ``W^{1,4}`` and weighted ``H^2`` monitors.

    For the flat channel ``G = grad eta (x) grad eta`` and ``R = hess eta``, so
    ``(h/4) c |grad eta|_{L4}^4 <= E`` and ``(h^3/48) c |hess eta|^2 <= E``
    with ``c`` the :func:`elasticity_floor`.
    """
    c = elasticity_floor(surf, params, grid)
    h = params.thickness
    return {"w14": (4 * energy0 / (h * c)) ** 0.25, "h2": 48 * energy0 / (h**3 * c),
            "c_elastic": c}


def w14_norm(eta):
    """``|grad eta|_{L4}``."""
    g = eta.grid
    d1 = spectral_derivative(eta.values, g, (1, 0))
    d2 = spectral_derivative(eta.values, g, (0, 1))
    return float(integrate((d1**2 + d2**2) ** 2, g) ** 0.25)


def _hessian(eta):
    g = eta.grid
    return [spectral_derivative(eta.values, g, o) for o in ((2, 0), (1, 1), (0, 2))]


def weighted_h2(surf, eta):
    """``int gamma(eta)^2 |hess eta|^2``."""
    g = eta.grid
    gam = gamma_from_frame(node_frame(surf, g), eta.values)
    h11, h12, h22 = _hessian(eta)
    return float(integrate(gam**2 * (h11**2 + 2 * h12**2 + h22**2), g))


def hessian_shift_sup(eta, s):
    """``sup_h sum |D^s_h d_ab eta|^2`` over grid shifts (off-diagonal counted twice)."""
    h11, h12, h22 = _hessian(eta)
    val, arg = shift_sup([h11, h12, h12, h22], eta.grid, s, 2)
    return val, arg


def structure_defect(surf, params, eta, s, shift=None):
    """Lower-bound defect of the bending form tested with ``D^s_{-h} D^s_h eta``.

    Returns ``(h^3/24) c gamma_min^2 |D^s_h hess eta|^2 - a_b(eta, D^s_{-h} D^s_h eta)``
    at the maximising shift, which stays bounded by a constant depending on
    ``|eta|_{H^2}`` along admissible trajectories.
    """
    g = eta.grid
    q, (direction, m) = hessian_shift_sup(eta, s) if shift is None else shift
    if q == 0.0:
        return 0.0
    fwd = _dq_values(eta.values, g, s, m, direction)
    xi = _dq_values(fwd, g, s, -m, direction)
    _, ab = frechet_forms(surf, params, jet_from_field(eta), ScalarField2D(g, xi))
    c = elasticity_floor(surf, params, g)
    gmin = float(np.min(gamma_from_frame(node_frame(surf, g), eta.values)))
    return params.thickness**3 / 24 * c * gmin**2 * q - float(np.real(ab))


def _time_weights(times):
    t = np.asarray(times, dtype=float)
    if t.size < 2:
        return np.zeros_like(t)
    w = np.zeros_like(t)
    # right-endpoint rule: each recorded state stands for the interval before it
    w[1:] = np.diff(t)
    return w


def regularity_diagnostics(trajectory, s, with_defect=True, korn=True):
    """Regularity quantities along a recorded trajectory.

    Parameters
    ----------
    trajectory : Trajectory
    s : float
        Fractional order in ``(0, 1/2)``.

    Returns
    -------
    dict
        ``w14``: ``sup_t |grad eta|_{L4}``; ``h2``: ``sup_t int gamma^2 |hess eta|^2``;
        ``nikolskii``: ``int sup_h |D^s_h hess eta|^2 dt``; ``vel_hs``:
        ``int |d_t eta|_{H^s}^2 dt``; ``defect``: max structure defect;
        ``grad3``: ``sup_t |grad^3 eta|``; ``korn_gap``: max relative Korn gap
        over the fluid snapshots.
    """
    if not 0.0 < s < 0.5:
        raise ValueError("order s must lie in (0, 1/2)")
    surf = trajectory.surface
    etas, vels = trajectory.etas, trajectory.vels
    if not etas:
        raise ValueError("empty trajectory")
    w = _time_weights(trajectory.times)
    w14 = max(w14_norm(e) for e in etas)
    h2 = max(weighted_h2(surf, e) for e in etas)
    nik = 0.0
    defect = 0.0
    hess3 = 0.0
    for wt, e in zip(w, etas):
        q, arg = hessian_shift_sup(e, s)
        nik += wt * q
        if with_defect and q > 0:
            defect = max(defect, structure_defect(surf, trajectory.params, e, s, (q, arg)))
        g = e.grid
        d3 = [spectral_derivative(e.values, g, o) for o in ((3, 0), (2, 1), (1, 2), (0, 3))]
        n3 = float(integrate(d3[0]**2 + 3 * d3[1]**2 + 3 * d3[2]**2 + d3[3]**2, g))
        hess3 = max(hess3, np.sqrt(n3))
    vel = float(sum(wt * sobolev_norm_hs(v, s) ** 2 for wt, v in zip(w, vels)))
    gaps = []
    if korn and trajectory.fluids:
        for fl, sh in zip(trajectory.fluids, trajectory.fluid_shells):
            lhs, rhs, gap = korn_check(fl, sh, trajectory.chart)
            gaps.append(abs(gap) / lhs if lhs > 0 else 0.0)
    return {"w14": w14, "h2": h2, "nikolskii": nik, "vel_hs": vel, "defect": defect,
            "grad3": hess3, "korn_gap": max(gaps) if gaps else 0.0}
