"""
Structure sub-step: implicit shell update with Simpson secant forces.

Unknown ``eta = eta^{n+1/2}``; ``v^{n+1/2} = (eta - eta^n)/dt``.  The residual

    F(eta) = (eta - eta^n)/dt - v^n + dt f(eta)

with ``<f(eta), xi> = (h/2) int A G(eta) : G'(eta^n, eta) xi
+ (h^3/24) int A R(eta) : R'(eta^n, eta) xi + eps <grad^3 eta, grad^3 xi>``
is driven to zero by Newton's method.  Because the secant derivatives
telescope, testing with ``eta - eta^n`` gives an exact discrete energy balance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from ..discrete import ScalarField2D
from ..errors import CoercivityLost, NewtonDiverged
from ..geometry import gamma_from_frame
from ..shell import (_reg_apply, _simpson_weights, assemble_dual, contract, elasticity_apply,
                     jet_from_field, koiter_energy, metric_change, curvature_change,
                     node_frame, plate_symbol, regularization_energy)

__all__ = ["ShellState", "shell_energy", "structure_force", "structure_step",
           "structure_dissipation"]

_CSTEP = 1e-30


@dataclass
class ShellState:
    """Displacement ``eta`` and velocity ``vel`` on the shell grid."""

    eta: ScalarField2D
    vel: ScalarField2D

    @classmethod
    def zeros(cls, grid):
        return cls(ScalarField2D.zeros(grid), ScalarField2D.zeros(grid))

    @property
    def grid(self):
        return self.eta.grid


def shell_energy(surf, params, eta):
    """Membrane, bending and regularisation energies of ``eta``."""
    mem, ben = koiter_energy(surf, params, jet_from_field(eta))
    return {"membrane": mem, "bending": ben, "regularization": regularization_energy(params, eta)}


def structure_force(surf, params, eta_old, eta):
    """Secant elastic force ``f(eta)`` of the structure sub-step (node values).

    ``eta`` may be complex (complex-step Jacobian products).
    """
    grid = eta_old.grid
    f = node_frame(surf, grid)
    ja = jet_from_field(eta_old)
    jb = jet_from_field(eta, grid)
    mid = (ja + jb).scale(0.5)
    pts = [ja, mid, jb]
    w = _simpson_weights()
    h = params.thickness
    SG = h / 2 * elasticity_apply(f, params, metric_change(f, jb))
    SR = h**3 / 24 * elasticity_apply(f, params, curvature_change(f, jb))
    r = (assemble_dual(SG, f, jb, "G", grid, w, pts)
         + assemble_dual(SR, f, jb, "R", grid, w, pts))
    return r + _reg_apply(params, eta, grid)


def structure_dissipation(surf, params, eta_old, eta_new, v_old, v_new):
    """Numerical dissipation of one structure sub-step.

    ``(1/2)|v - v^n|^2 + (h/4) int A dG:dG + (h^3/48) int A dR:dR + (eps/2)|grad^3 d eta|^2``
    where ``d`` is the increment over the step.
    """
    grid = eta_old.grid
    f = node_frame(surf, grid)
    ja, jb = jet_from_field(eta_old), jet_from_field(eta_new)
    dG = metric_change(f, jb) - metric_change(f, ja)
    dR = curvature_change(f, jb) - curvature_change(f, ja)
    h = params.thickness
    da = grid.cell_area
    out = 0.5 * float(np.sum((v_new.values - v_old.values) ** 2)) * da
    out += h / 4 * float(np.sum(contract(elasticity_apply(f, params, dG), dG))) * da
    out += h**3 / 48 * float(np.sum(contract(elasticity_apply(f, params, dR), dR))) * da
    out += regularization_energy(params, eta_new - eta_old)
    return out


def structure_step(shell, dt, params, surface, chart=None, newton_tol=1e-10, gamma_min=0.0,
                   max_iter=40, return_info=False):
    """Advance the shell over one structure sub-step.

    Parameters
    ----------
    shell : ShellState
        ``(eta^n, v^n)``.
    dt : float
    params : ShellParams
    surface : ReferenceSurface
    chart : TubularChart, optional
        When given, the collar bounds are checked on the result.
    newton_tol : float
        Bound on the grid ``L2`` norm of the residual ``F``.
    gamma_min : float
        Coercivity floor; the step fails when ``gamma(eta)`` reaches it.
    return_info : bool
        Also return a dict with iteration history and energies.

    Returns
    -------
    ShellState
        ``(eta^{n+1/2}, v^{n+1/2})``.

    Raises
    ------
    NewtonDiverged
        Line search could not reduce the residual; ``err.trace`` lists
        ``(iteration, residual, step length)``.
    CoercivityLost
    DisplacementOutOfRange
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = shell.grid
    da = grid.cell_area
    e0 = shell.eta.values
    v0 = shell.vel.values

    def F(e):
        return (e - e0) / dt - v0 + dt * structure_force(surface, params, shell.eta, e)

    def norm(r):
        return float(np.sqrt(np.sum(np.abs(r) ** 2) * da))

    symbol = 1.0 / dt + dt * plate_symbol(surface, params, grid)

    def precond(r):
        r = np.asarray(r).reshape(grid.shape)
        return np.fft.ifft2(np.fft.fft2(r) / symbol).real.ravel()

    n = e0.size
    M = spla.LinearOperator((n, n), matvec=precond, dtype=float)
    eta = e0 + dt * v0
    r = F(eta)
    res = norm(r)
    trace = [(0, res, 1.0)]
    it = 0
    while res > newton_tol:
        if it >= max_iter:
            raise NewtonDiverged(f"no convergence after {max_iter} Newton steps "
                                 f"(residual {res:.3e})", trace)
        base = eta

        def jv(d, base=base):
            d = np.asarray(d).reshape(grid.shape)
            return (F(base + 1j * _CSTEP * d).imag / _CSTEP).ravel()

        J = spla.LinearOperator((n, n), matvec=jv, dtype=float)
        delta, info = spla.gmres(J, -r.ravel(), M=M, rtol=min(1e-4, 0.1 * newton_tol / res),
                                 atol=0.0, restart=40, maxiter=20)
        delta = delta.reshape(grid.shape)
        lam = 1.0
        while True:
            trial = eta + lam * delta
            rt = F(trial)
            rn = norm(rt)
            if rn < (1 - 1e-4 * lam) * res:
                break
            lam *= 0.5
            if lam < 2.0**-12:
                step = norm(delta)
                # round-off floor: the residual cannot be reduced any further
                if step <= 1e-13 * (1 + norm(eta)) and res < 1e3 * newton_tol:
                    rt, rn, lam = r, res, 0.0
                    break
                trace.append((it + 1, rn, lam))
                raise NewtonDiverged(f"line search failed at residual {res:.3e}", trace)
        it += 1
        trace.append((it, rn, lam))
        if lam == 0.0:
            break
        eta, r, res = trial, rt, rn
    new_eta = ScalarField2D(grid, eta)
    new_v = ScalarField2D(grid, (eta - e0) / dt)
    fr = node_frame(surface, grid)
    gmin = float(np.min(gamma_from_frame(fr, eta)))
    if gmin <= gamma_min:
        raise CoercivityLost(f"gamma(eta) reached {gmin:.6g} <= gamma_min = {gamma_min:.6g}")
    if chart is not None:
        chart.check_displacement(new_eta)
    out = ShellState(new_eta, new_v)
    if not return_info:
        return out
    info = {"iterations": it, "residual": res, "trace": trace, "gamma_min": gmin,
            "numerical_dissipation": structure_dissipation(surface, params, shell.eta, new_eta,
                                                           shell.vel, new_v)}
    return out, info
