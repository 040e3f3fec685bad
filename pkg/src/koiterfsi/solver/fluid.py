"""
Linear ALE fluid sub-step on the flat channel.

The reference box ``omega x [-d, 0]`` is mapped by ``psi(y, s) = (y, s + sigma(s) eta(y))``,
so ``grad psi`` has the last row ``(a1, a2, J)`` with ``a_alpha = sigma d_alpha eta`` and
``J = 1 + sigma' eta``.  Every discrete form below is assembled as a product of
fixed MAC stencils and diagonal metric weights:

* divergence ``C``: net Piola flux ``(J u1, J u2, u3 - a1 u1 - a2 u2)`` out of each cell,
* mass ``M_J``: ``J`` times the node control volume,
* viscous form ``2 int J D(u):D(q)`` from the transformed gradient
  ``(grad^eta u)_ij = d_j u_i + d_s u_i p_j`` with ``p = (-a1/J, -a2/J, 1/J - 1)``,
* convection: skew part ``(K - K^T)/2`` of ``int J (b . grad^eta u) . q``.

The top level of ``u3`` is the shell velocity, so the kinematic condition is
built into the unknowns and the dynamic condition is enforced weakly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import faults
from ..discrete import ScalarField2D, spectral_derivative, spectral_shift
from ..errors import JacobianNonpositive, SolverFailure, UnsupportedGeometry
from ..staggered import (CirculantBlockSolver, FluidGrid, StaggeredField3D, kron3,
                         periodic_ops, vertical_ops)

__all__ = [
    "FluidOperators",
    "ALEMetric",
    "FluidState",
    "divergence_matrix",
    "mass_weights",
    "gradient_pieces",
    "viscous_matrix",
    "convection_matrix",
    "kinetic_energy",
    "divergence_residual",
    "fluid_step",
    "SaddleSolver",
]

_HPOS = {"c": (0.0, 0.0), "x": (0.5, 0.0), "y": (0.0, 0.5), "e": (0.5, 0.5)}


class FluidOperators:
    """Constant MAC stencils of a :class:`FluidGrid` (built once per grid)."""

    _cache = {}

    def __new__(cls, grid):
        obj = cls._cache.get(grid)
        if obj is None:
            obj = super().__new__(cls)
            obj._build(grid)
            if len(cls._cache) > 8:
                cls._cache.clear()
            cls._cache[grid] = obj
        return obj

    def _build(self, g):
        self.grid = g
        P = periodic_ops(g.n1, g.h1)
        Q = periodic_ops(g.n2, g.h2)
        Z = vertical_ops(g.nz, g.hz)
        I1, I2 = P["I"], Q["I"]
        If = sp.identity(g.nz + 1, format="csr")
        self.nU = g.nz * g.M
        k = kron3
        E3 = Z["E3"]
        self.E3f = k(E3, I1, I2)
        # divergence pieces
        self.Dx_u1 = k(Z["I"], P["Dbwd"], I2)
        self.Dy_u2 = k(Z["I"], I1, Q["Dbwd"])
        self.Ds_f = k(Z["Df2c"], I1, I2)
        self.A_u1_f = k(Z["Ac2f"], P["Abwd"], I2)
        self.A_u2_f = k(Z["Ac2f"], I1, Q["Abwd"])
        # gradient pieces
        self.dsC_u1 = k(Z["Dcc"], P["Abwd"], I2)
        self.dsC_u2 = k(Z["Dcc"], I1, Q["Abwd"])
        self.d2_u1_e = k(Z["I"], I1, Q["Dfwd"])
        self.ds_u1_e = k(Z["Dcc"], I1, Q["Afwd"])
        self.d1_u2_e = k(Z["I"], P["Dfwd"], I2)
        self.ds_u2_e = k(Z["Dcc"], P["Afwd"], I2)
        self.ds_u1_f = k(Z["Dc2f"], I1, I2)
        self.d1_u3_y = k(E3, P["Dfwd"], I2)
        self.ds_u3_y = k(Z["Dff"] @ E3, P["Afwd"], I2)
        self.d2_u3_x = k(E3, I1, Q["Dfwd"])
        self.ds_u3_x = k(Z["Dff"] @ E3, I1, Q["Afwd"])
        self.ds_u3_c = k(Z["Df2c"] @ E3, I1, I2)
        # convection pieces (central differences at the velocity nodes)
        self.Dc1 = k(Z["I"], P["Dc"], I2)
        self.Dc2 = k(Z["I"], I1, Q["Dc"])
        self.Dcs = k(Z["Dcc"], I1, I2)
        self.Dc1_f = k(If, P["Dc"], I2)
        self.Dc2_f = k(If, I1, Q["Dc"])
        self.Dcs_f = k(Z["Dff"], I1, I2)
        # interpolation of the advecting velocity to each node family
        self.i_u2_to_u1 = k(Z["I"], P["Afwd"], Q["Abwd"])
        self.i_u3_to_u1 = k(Z["Af2c"] @ E3, P["Afwd"], I2)
        self.i_u1_to_u2 = k(Z["I"], P["Abwd"], Q["Afwd"])
        self.i_u3_to_u2 = k(Z["Af2c"] @ E3, I1, Q["Afwd"])
        self.fw = g.face_weights()


class ALEMetric:
    """Metric fields of ``psi_eta`` at every node family of the MAC grid.

    ``get(vpos, hpos)`` returns ``(J, a1, a2)`` as flat level-major arrays;
    ``vpos`` is ``"c"`` (cell levels) or ``"f"`` (face levels) and ``hpos`` one
    of ``"c"`` (cell centre), ``"x"``/``"y"`` (faces) or ``"e"`` (z-edge).
    """

    def __init__(self, chart, grid, eta):
        if chart.surface.kind != "flat":
            raise UnsupportedGeometry("the fluid solver supports the flat channel only")
        self.chart = chart
        self.grid = grid
        vals = eta.values if isinstance(eta, ScalarField2D) else np.asarray(eta)
        self.eta = vals
        om = grid.omega
        self._h = {}
        d1 = spectral_derivative(vals, om, (1, 0))
        d2 = spectral_derivative(vals, om, (0, 1))
        for key, sh in _HPOS.items():
            self._h[key] = tuple(spectral_shift(v, om, sh) if key != "c" else v
                                 for v in (vals, d1, d2))
        self._s = {"c": grid.s_centers, "f": grid.s_faces}
        self._cache = {}

    def get(self, vpos, hpos):
        key = (vpos, hpos)
        if key not in self._cache:
            s = self._s[vpos][:, None, None]
            e, d1, d2 = self._h[hpos]
            sig = self.chart.sigma(s)
            dsig = self.chart.sigma(s, 1)
            J = 1.0 + dsig * e[None]
            self._cache[key] = (J.ravel(), (sig * d1[None]).ravel(), (sig * d2[None]).ravel())
        return self._cache[key]

    def J_cells(self):
        return self.get("c", "c")[0].reshape(self.grid.nz, self.grid.n1, self.grid.n2)

    def horizontal(self, hpos):
        return self._h[hpos][0]


def _D(v):
    return sp.diags(v, format="csr")


def divergence_matrix(ops, met):
    """Cell-integrated transformed divergence ``int_cell J div^eta u``."""
    g = ops.grid
    Ju1 = met.get("c", "x")[0]
    Ju2 = met.get("c", "y")[0]
    _, a1f, a2f = met.get("f", "c")
    vol = g.vol
    C1 = ops.Dx_u1 @ _D(Ju1) - ops.Ds_f @ _D(a1f) @ ops.A_u1_f
    C2 = ops.Dy_u2 @ _D(Ju2) - ops.Ds_f @ _D(a2f) @ ops.A_u2_f
    C3 = ops.Ds_f @ ops.E3f
    return vol * sp.hstack([C1, C2, C3], format="csr")


def mass_weights(ops, met=None):
    """Control-volume weights of the velocity unknowns, times ``J`` when ``met`` is given."""
    g = ops.grid
    nU = ops.nU
    w = np.full(3 * nU, g.vol)
    top = np.zeros((g.nz, g.n1, g.n2))
    top[-1] = 1.0
    w[2 * nU:] *= 1.0 - 0.5 * top.ravel()
    if met is None:
        return w
    J = np.concatenate([met.get("c", "x")[0], met.get("c", "y")[0],
                        met.get("f", "c")[0][g.M:]])
    return w * J


def gradient_pieces(ops, met):
    """Transformed gradient entries at their natural MAC locations.

    Returns ``(mats, weights)`` where ``mats[(i, j)]`` maps the velocity vector
    to ``(grad^eta u)_ij`` at its node family and ``weights[(i, j)]`` holds the
    ``J``-weighted control volumes of that family.
    """
    g = ops.grid
    nU = ops.nU
    Z = sp.csr_matrix((nU, nU))
    Zf = sp.csr_matrix(((g.nz + 1) * g.M, nU))
    vol = g.vol
    Jc, a1c, a2c = met.get("c", "c")
    Je, a1e, a2e = met.get("c", "e")
    Jy, a1y, _ = met.get("f", "x")
    Jx, _, a2x = met.get("f", "y")
    fw = np.repeat(ops.fw, g.M)
    row = lambda *b: sp.hstack(b, format="csr")
    mats = {
        (0, 0): row(ops.Dx_u1 + _D(-a1c / Jc) @ ops.dsC_u1, Z, Z),
        (1, 1): row(Z, ops.Dy_u2 + _D(-a2c / Jc) @ ops.dsC_u2, Z),
        (2, 2): row(Z, Z, _D(1.0 / Jc) @ ops.ds_u3_c),
        (0, 1): row(ops.d2_u1_e + _D(-a2e / Je) @ ops.ds_u1_e, Z, Z),
        (1, 0): row(Z, ops.d1_u2_e + _D(-a1e / Je) @ ops.ds_u2_e, Z),
        (0, 2): row(_D(1.0 / Jy) @ ops.ds_u1_f, Zf, Zf),
        (2, 0): row(Zf, Zf, ops.d1_u3_y + _D(-a1y / Jy) @ ops.ds_u3_y),
        (1, 2): row(Zf, _D(1.0 / Jx) @ ops.ds_u1_f, Zf),
        (2, 1): row(Zf, Zf, ops.d2_u3_x + _D(-a2x / Jx) @ ops.ds_u3_x),
    }
    wc, we = vol * Jc, vol * Je
    wy, wx = vol * Jy * fw, vol * Jx * fw
    weights = {(0, 0): wc, (1, 1): wc, (2, 2): wc, (0, 1): we, (1, 0): we,
               (0, 2): wy, (2, 0): wy, (1, 2): wx, (2, 1): wx}
    return mats, weights


def viscous_matrix(ops, met):
    """Matrix of ``2 int J D^eta(u) : D^eta(q)``."""
    mats, w = gradient_pieces(ops, met)
    V = 0
    for i in range(3):
        V = V + 2 * (mats[(i, i)].T @ _D(w[(i, i)]) @ mats[(i, i)])
    for i, j in ((0, 1), (0, 2), (1, 2)):
        S = 0.5 * (mats[(i, j)] + mats[(j, i)])
        V = V + 4 * (S.T @ _D(w[(i, j)]) @ S)
    return sp.csr_matrix(V)


def convection_matrix(ops, met, u_old, w3):
    """Matrix of ``int J (b . grad^eta u) . q`` with ``b = u_old - w``.

    Rows of the interface unknowns are left empty: the shell equation carries
    no convective term.
    """
    g = ops.grid
    nU, M = ops.nU, g.M
    x = u_old.velocity_vector()
    U1, U2, U3 = x[:nU], x[nU:2 * nU], x[2 * nU:]
    blocks = []
    # u1 nodes
    J, a1, a2 = met.get("c", "x")
    b1, b2 = U1, ops.i_u2_to_u1 @ U2
    b3 = ops.i_u3_to_u1 @ U3 - w3["x"]
    om = (b3 - a1 * b1 - a2 * b2) / J
    blocks.append(_D(g.vol * J * b1) @ ops.Dc1 + _D(g.vol * J * b2) @ ops.Dc2
                  + _D(g.vol * J * om) @ ops.Dcs)
    # u2 nodes
    J, a1, a2 = met.get("c", "y")
    b1, b2 = ops.i_u1_to_u2 @ U1, U2
    b3 = ops.i_u3_to_u2 @ U3 - w3["y"]
    om = (b3 - a1 * b1 - a2 * b2) / J
    blocks.append(_D(g.vol * J * b1) @ ops.Dc1 + _D(g.vol * J * b2) @ ops.Dc2
                  + _D(g.vol * J * om) @ ops.Dcs)
    # u3 nodes (all faces, then restricted to interior unknown rows)
    J, a1, a2 = met.get("f", "c")
    b1, b2 = ops.A_u1_f @ U1, ops.A_u2_f @ U2
    b3 = ops.E3f @ U3 - w3["f"]
    om = (b3 - a1 * b1 - a2 * b2) / J
    K3f = (_D(g.vol * J * b1) @ ops.Dc1_f + _D(g.vol * J * b2) @ ops.Dc2_f
           + _D(g.vol * J * om) @ ops.Dcs_f) @ ops.E3f
    keep = np.ones(nU)
    keep[-M:] = 0.0
    K3 = _D(keep) @ ops.E3f.T @ K3f
    return sp.block_diag([blocks[0], blocks[1], K3], format="csr")


def kinetic_energy(ops, met, u):
    """``(1/2) int J |u|^2`` over the reference box (interface node included)."""
    x = u.velocity_vector()
    return 0.5 * float(np.dot(mass_weights(ops, met) * x, x))


def divergence_residual(ops, met, u):
    """Largest cell value of ``|div^eta u|`` (cell flux balance over ``J vol``)."""
    C = divergence_matrix(ops, met)
    Jc = met.get("c", "c")[0]
    return float(np.max(np.abs(C @ u.velocity_vector()) / (Jc * ops.grid.vol)))


@dataclass
class FluidState:
    """Fluid velocity/pressure with the Jacobian and ALE velocity of the last step.

    ``eta`` is the displacement whose metric carries the divergence
    constraint of ``u`` (the geometry at the start of the step that produced it).
    """

    u: StaggeredField3D
    J: np.ndarray = None
    w: np.ndarray = None
    eta: np.ndarray = None

    @classmethod
    def zeros(cls, grid):
        return cls(StaggeredField3D.zeros(grid), np.ones((grid.nz, grid.n1, grid.n2)),
                   np.zeros((grid.nz + 1, grid.n1, grid.n2)))


class SaddleSolver:
    """Solve ``[[A, -C^T], [-C, 0]] [u; p] = [f; g]``.

    ``method="krylov"`` runs restarted GMRES right-preconditioned by the exact
    block-circulant inverse of a reference (translation-invariant) matrix;
    ``method="direct"`` uses a sparse LU factorisation.
    """

    def __init__(self, grid, method="krylov", rtol=1e-12, maxiter=400, restart=60):
        self.grid = grid
        self.method = method
        self.rtol = rtol
        self.maxiter = maxiter
        self.restart = restart
        self._pc = {}

    def preconditioner(self, key, ref_matrix, singular):
        if key not in self._pc:
            g = self.grid
            self._pc[key] = CirculantBlockSolver(ref_matrix, 4 * g.nz, g.n1, g.n2,
                                                 singular_zero_mode=singular)
        return self._pc[key]

    def solve(self, K, rhs, pc=None):
        n = K.shape[0]
        if self.method == "direct":
            try:
                x = spla.spsolve(sp.csc_matrix(K), rhs)
            except Exception as exc:  # pragma: no cover - backend specific
                raise SolverFailure(f"sparse factorisation failed: {exc}") from exc
            if not np.all(np.isfinite(x)):
                raise SolverFailure("sparse factorisation produced non-finite values")
            return x, {"iterations": 0, "residual": float(np.linalg.norm(K @ x - rhs))}
        if pc is None:
            raise ValueError("krylov method needs a preconditioner")
        Ml = spla.LinearOperator((n, n), matvec=pc.solve, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        bnorm = float(np.linalg.norm(rhs))
        if bnorm == 0.0:
            return np.zeros(n), {"iterations": 0, "residual": 0.0}
        x0 = pc.solve(rhs)
        x, info = spla.gmres(K, rhs, x0=x0, M=Ml, rtol=self.rtol, atol=0.0,
                             restart=self.restart, maxiter=self.maxiter,
                             callback=cb, callback_type="pr_norm")
        res = float(np.linalg.norm(K @ x - rhs))
        if info != 0 and res > 1e3 * self.rtol * bnorm:
            raise SolverFailure(f"GMRES stopped (info={info}) at relative residual {res / bnorm:.3e}")
        return x, {"iterations": count[0], "residual": res}


def _w3_fields(ops, met, v_half):
    """ALE velocity ``sigma(s) v_half(y)`` at the three vertical-velocity node families."""
    g = ops.grid
    chart = met.chart
    om = g.omega
    vx = spectral_shift(v_half, om, _HPOS["x"])
    vy = spectral_shift(v_half, om, _HPOS["y"])
    sc = chart.sigma(g.s_centers)[:, None, None]
    sf = chart.sigma(g.s_faces)[:, None, None]
    return {"x": (sc * vx[None]).ravel(), "y": (sc * vy[None]).ravel(),
            "f": (sf * v_half[None]).ravel(), "faces": sf * v_half[None]}


def _assemble(ops, met_old, met_new, u_old, v_half, dt, viscosity, frozen, shell_mass=True):
    g = ops.grid
    nU, M = ops.nU, g.M
    mw = mass_weights(ops)
    m_old = mass_weights(ops, met_old)
    m_new = mass_weights(ops, met_new)
    w3 = _w3_fields(ops, met_old, v_half)
    K = convection_matrix(ops, met_old, u_old, w3)
    if faults.active("skew_pairing"):
        N = K
    else:
        N = 0.5 * (K - K.T)
    diag = m_old / dt + 0.5 * (m_new - m_old) / dt
    ms = np.zeros(3 * nU)
    ms[-M:] = g.h1 * g.h2
    diag = diag + ms / dt
    A = sp.diags(diag) + N
    if viscosity:
        A = A + viscosity * viscous_matrix(ops, met_old)
    C = divergence_matrix(ops, met_old)
    x_old = u_old.velocity_vector()
    rhs_u = m_old * x_old / dt
    rhs_u[-M:] += g.h1 * g.h2 * v_half.ravel() / dt
    if frozen:
        keep = np.ones(3 * nU)
        keep[-M:] = 0.0
        Dk = sp.diags(keep)
        A = Dk @ A @ Dk + sp.diags(1.0 - keep)
        C = C @ Dk
        rhs_u = rhs_u * keep
    return sp.csr_matrix(A), C, rhs_u, w3, mw


def _saddle(A, C):
    return sp.bmat([[A, -C.T], [-C, None]], format="csr")


def _reference_matrix(ops, chart, dt, viscosity, frozen):
    g = ops.grid
    zero = np.zeros((g.n1, g.n2))
    met = ALEMetric(chart, g, zero)
    A, C, *_ = _assemble(ops, met, met, StaggeredField3D.zeros(g), zero, dt, viscosity, frozen)
    return _saddle(A, C)


def fluid_step(chart, grid, fluid, eta_old, eta_new, v_half, dt, viscosity=1.0,
               solver=None, frozen=False, lin_tol=1e-10):
    """One ALE fluid sub-step.

    Parameters
    ----------
    chart : TubularChart
    grid : FluidGrid
    fluid : FluidState
        State at ``t^n``; its top ``u3`` level is the fluid copy of ``v^n``.
    eta_old, eta_new : array
        ``eta^n`` and ``eta^{n+1} = eta^{n+1/2}`` on the ``omega`` nodes.
    v_half : array
        Shell velocity after the structure sub-step.
    dt : float
    viscosity : float
        Kinematic viscosity; ``0`` drops the viscous form.
    solver : SaddleSolver, optional
    frozen : bool
        Hold the interface fixed (``v = 0``); used by the conservation checks.

    Returns
    -------
    FluidState, ndarray, dict
        New state, ``v^{n+1}`` and a record of energies, dissipation and
        solver statistics.
    """
    ops = FluidOperators(grid)
    solver = solver or SaddleSolver(grid)
    eta_old = np.asarray(eta_old)
    eta_new = np.asarray(eta_new)
    v_half = np.asarray(v_half)
    met_old = ALEMetric(chart, grid, eta_old)
    met_new = ALEMetric(chart, grid, eta_new)
    for met in (met_old, met_new):
        Jmin = min(float(np.min(met.get(v, h)[0])) for v in "cf" for h in "cxye")
        if Jmin <= 0:
            raise JacobianNonpositive(f"ALE Jacobian reaches {Jmin:.3e}")
    A, C, rhs_u, w3, _ = _assemble(ops, met_old, met_new, fluid.u, v_half, dt, viscosity, frozen)
    K = _saddle(A, C)
    rhs = np.concatenate([rhs_u, np.zeros(C.shape[0])])
    pc = None
    if solver.method == "krylov":
        key = ("step", dt, viscosity, frozen)
        if key not in solver._pc:
            solver.preconditioner(key, _reference_matrix(ops, chart, dt, viscosity, frozen), frozen)
        pc = solver._pc[key]
    elif frozen:
        # pin the pressure mean: the constraint rows are dependent when v is held
        K = sp.lil_matrix(K)
        r0 = 3 * ops.nU
        K[r0, :] = 0.0
        K[r0, r0:] = 1.0
        K = sp.csr_matrix(K)
    x, stats = solver.solve(K, rhs, pc)
    nU = ops.nU
    xu = x[:3 * nU]
    p = x[3 * nU:].reshape(grid.nz, grid.n1, grid.n2)
    u_new = StaggeredField3D.from_velocity_vector(grid, xu, p)
    v_new = u_new.top.copy()
    # energy bookkeeping
    x_old = fluid.u.velocity_vector()
    m_old = mass_weights(ops, met_old)
    m_new = mass_weights(ops, met_new)
    da = grid.h1 * grid.h2
    ke_old = 0.5 * float(np.dot(m_old * x_old, x_old))
    ke_new = 0.5 * float(np.dot(m_new * xu, xu))
    visc = 0.0
    if viscosity:
        visc = dt * viscosity * float(xu @ (viscous_matrix(ops, met_old) @ xu))
    du = xu - x_old
    num = 0.5 * float(np.dot(m_old * du, du)) + 0.5 * da * float(np.sum((v_new - v_half) ** 2))
    div = float(np.max(np.abs(C @ xu) / (met_old.get("c", "c")[0] * grid.vol)))
    record = {
        "fluid_kinetic_old": ke_old,
        "fluid_kinetic": ke_new,
        "viscous_dissipation": visc,
        "numerical_dissipation": num,
        "divergence": div,
        "J_min": float(np.min(met_new.get("c", "c")[0])),
        **stats,
    }
    state = FluidState(u_new, met_new.J_cells(), w3["faces"], eta_old.copy())
    return state, v_new, record
