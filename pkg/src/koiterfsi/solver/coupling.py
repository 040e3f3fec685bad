"""
Lie splitting of the coupled problem: initial data, time loop and energy ledger.

One step runs the structure sub-step ``(eta^n, v^n) -> (eta^{n+1/2}, v^{n+1/2})``,
then the fluid sub-step on the frozen geometry, which returns ``u^{n+1}`` and
``v^{n+1}``; the displacement is not touched again (``eta^{n+1} = eta^{n+1/2}``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..discrete import ScalarField2D, fourier_field
from ..errors import (CoercivityLost, DisplacementOutOfRange, IncompatibleData,
                      JacobianNonpositive, NewtonDiverged, SolverFailure)
from ..extension import solenoidal_extend
from ..geometry import gamma_from_frame
from ..shell import ShellParams, node_frame
from ..staggered import FluidGrid, StaggeredField3D
from .fluid import (ALEMetric, FluidOperators, FluidState, SaddleSolver, divergence_matrix,
                    divergence_residual, fluid_step, kinetic_energy, mass_weights)
from .structure import ShellState, shell_energy, structure_step

__all__ = [
    "LEDGER_COLUMNS",
    "EnergyLedger",
    "Trajectory",
    "Outcome",
    "Problem",
    "build_problem",
    "project_initial_data",
    "time_loop",
]

LEDGER_COLUMNS = (
    "step", "time", "fluid_kinetic", "shell_kinetic", "membrane", "bending", "regularization",
    "total", "viscous_dissipation", "numerical_dissipation", "gamma_min", "J_min",
)

ENERGY_COLUMNS = ("fluid_kinetic", "shell_kinetic", "membrane", "bending", "regularization")


class EnergyLedger:
    """Per-step energy record.

    ``total`` is the sum of the five energy columns; the dissipation columns
    hold what one step removed, so ``total[n+1] + viscous + numerical =
    total[n]`` up to solver tolerances.
    """

    columns = LEDGER_COLUMNS

    def __init__(self):
        self.rows = []

    def append(self, row):
        row = dict(row)
        row["total"] = sum(row[c] for c in ENERGY_COLUMNS)
        missing = [c for c in LEDGER_COLUMNS if c not in row]
        if missing:
            raise KeyError(f"ledger row misses {missing}")
        self.rows.append({c: row[c] for c in LEDGER_COLUMNS})

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def energy_increments(self):
        """``E^{n+1} + viscous^{n+1} - E^n`` for each consecutive pair of rows."""
        tot = self.column("total")
        visc = self.column("viscous_dissipation")
        return tot[1:] + visc[1:] - tot[:-1]

    def balance_defects(self):
        """``E^{n+1} + viscous + numerical - E^n``; zero up to solver tolerances."""
        return self.energy_increments() + self.column("numerical_dissipation")[1:]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LEDGER_COLUMNS)
            for r in self.rows:
                w.writerow([str(r["step"])] + ["%.17e" % r[c] for c in LEDGER_COLUMNS[1:]])

    @classmethod
    def read_csv(cls, path):
        out = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            if tuple(header) != LEDGER_COLUMNS:
                raise ValueError(f"unexpected ledger header {header}")
            for row in rd:
                vals = {c: float(v) for c, v in zip(header, row)}
                vals["step"] = int(vals["step"])
                out.rows.append(vals)
        return out


@dataclass
class Trajectory:
    """Recorded shell history (every ledger step) and fluid snapshots."""

    surface: object
    params: ShellParams
    chart: object = None
    times: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    vels: list = field(default_factory=list)
    fluid_times: list = field(default_factory=list)
    fluids: list = field(default_factory=list)
    fluid_shells: list = field(default_factory=list)

    def record_shell(self, t, shell):
        self.times.append(float(t))
        self.etas.append(shell.eta.copy())
        self.vels.append(shell.vel.copy())

    def record_fluid(self, t, fluid, shell):
        self.fluid_times.append(float(t))
        self.fluids.append(fluid)
        self.fluid_shells.append(ShellState(shell.eta.copy(), shell.vel.copy()))


@dataclass
class Outcome:
    """How a run ended.

    ``arm`` is ``"final_time"``, ``"self_intersection"`` (collar breach or
    non-positive ALE Jacobian), ``"coercivity"`` (gamma at the floor) or
    ``"solver_failure"``.
    """

    arm: str
    message: str
    steps: int
    time: float

    @property
    def ok(self):
        return self.arm == "final_time"


@dataclass
class Problem:
    config: object
    surface: object
    chart: object
    params: ShellParams
    omega: object
    fgrid: FluidGrid = None
    solver: SaddleSolver = None


def build_problem(cfg):
    surf = cfg.surface
    chart = cfg.chart
    params = ShellParams(cfg.thickness, cfg.lame_lambda, cfg.lame_mu, cfg.reg_eps)
    omega = surf.grid(cfg.n1, cfg.n2)
    fgrid = solver = None
    if cfg.fluid_enabled:
        fgrid = FluidGrid(cfg.n1, cfg.n2, cfg.n_depth, depth=cfg.depth)
        solver = SaddleSolver(fgrid, method=cfg.linear_solver,
                              rtol=min(1e-12, 1e-2 * cfg.lin_tol))
    return Problem(cfg, surf, chart, params, omega, fgrid, solver)


def _modes_field(grid, modes):
    return fourier_field(grid, [tuple(m) for m in modes])


def _coefficient_velocity(fgrid, spec):
    u = StaggeredField3D.zeros(fgrid)
    om = fgrid.omega
    y1, y2 = om.coords()
    sh = {1: (0.5 * fgrid.h1, 0.0), 2: (0.0, 0.5 * fgrid.h2), 3: (0.0, 0.0)}
    for comp, k1, k2, kind, amp, m in spec:
        d1, d2 = sh[comp]
        arg = 2 * np.pi * (k1 * (y1 + d1) + k2 * (y2 + d2))
        hor = amp * (np.cos(arg) if kind == "cos" else np.sin(arg))
        s = fgrid.s_faces if comp == 3 else fgrid.s_centers
        prof = np.sin(m * np.pi * (s - fgrid.s_bot) / fgrid.depth)
        target = {1: u.u1, 2: u.u2, 3: u.u3}[comp]
        target += prof[:, None, None] * hor[None]
    return u


def _projection_system(ops, met, dk, fix):
    m = mass_weights(ops, met)
    A = sp.diags(m * dk + fix)
    C = divergence_matrix(ops, met)
    K = sp.bmat([[A, -sp.diags(dk) @ C.T], [-C, None]], format="csr")
    return K, m


def project_initial_data(cfg, problem=None):
    """Initial shell and fluid states with the kinematic condition built in.

    The raw velocity (``cfg.u0``) is replaced by the ``J``-weighted ``L2``
    projection onto discretely divergence-free fields whose interface level
    equals ``eta1``.

    Returns
    -------
    ShellState, FluidState or None, dict
        The report holds the trace and divergence residuals.

    Raises
    ------
    IncompatibleData
        ``eta1`` has nonzero mean (the enclosed fluid volume would change) or
        the projected field misses the trace.
    """
    pb = problem or build_problem(cfg)
    om = pb.omega
    eta0 = _modes_field(om, cfg.eta0)
    eta1 = _modes_field(om, cfg.eta1)
    pb.chart.check_displacement(eta0)
    shell = ShellState(eta0, eta1)
    if not cfg.fluid_enabled:
        return shell, None, {"trace": 0.0, "divergence": 0.0}
    g = pb.fgrid
    scale = 1.0 + float(np.max(np.abs(eta1.values)))
    if abs(float(np.mean(eta1.values))) > 1e-12 * scale:
        raise IncompatibleData(f"eta1 has mean {np.mean(eta1.values):.3e}; an incompressible "
                               "fluid in a closed channel needs a mean-free interface velocity")
    if cfg.u0 == "zero":
        raw = StaggeredField3D.zeros(g)
    elif cfg.u0 == "lifted":
        raw = solenoidal_extend(pb.chart, eta0, eta1, g)
    else:
        raw = _coefficient_velocity(g, cfg.u0)
    ops = FluidOperators(g)
    met = ALEMetric(pb.chart, g, eta0)
    n3 = 3 * ops.nU
    dk = np.ones(n3)
    dk[-g.M:] = 0.0
    fix = 1.0 - dk
    K, m = _projection_system(ops, met, dk, fix)
    x_raw = raw.velocity_vector()
    rhs_u = m * x_raw * dk
    rhs_u[-g.M:] = eta1.values.ravel()
    rhs = np.concatenate([rhs_u, np.zeros(ops.nU)])
    if not np.any(rhs):
        x = np.zeros_like(rhs)
    elif pb.solver.method == "direct":
        K = sp.lil_matrix(K)
        K[n3, :] = 0.0
        K[n3, n3:] = 1.0
        x, _ = pb.solver.solve(sp.csr_matrix(K), rhs)
    else:
        key = ("projection",)
        if key not in pb.solver._pc:
            zero = ALEMetric(pb.chart, g, np.zeros(om.shape))
            Kref, _ = _projection_system(ops, zero, dk, fix)
            pb.solver.preconditioner(key, Kref, True)
        x, _ = pb.solver.solve(K, rhs, pb.solver._pc[key])
    u = StaggeredField3D.from_velocity_vector(g, x[:n3])
    trace = float(np.max(np.abs(u.top - eta1.values)))
    div = divergence_residual(ops, met, u)
    if trace > max(cfg.lin_tol, 1e-12) * scale:
        raise IncompatibleData(f"projected velocity misses the interface trace by {trace:.3e}")
    fluid = FluidState(u, met.J_cells(), np.zeros((g.nz + 1, g.n1, g.n2)), eta0.values.copy())
    return shell, fluid, {"trace": trace, "divergence": div,
                          "change": float(np.sqrt(np.dot(m * (x[:n3] - x_raw), x[:n3] - x_raw)))}


def _energies(pb, shell, fluid):
    e = shell_energy(pb.surface, pb.params, shell.eta)
    om = pb.omega
    row = {"shell_kinetic": 0.5 * float(np.sum(shell.vel.values**2)) * om.cell_area,
           "membrane": e["membrane"], "bending": e["bending"],
           "regularization": e["regularization"]}
    gmin = float(np.min(gamma_from_frame(node_frame(pb.surface, om), shell.eta.values)))
    if fluid is None:
        row.update(fluid_kinetic=0.0, gamma_min=gmin, J_min=1.0)
        return row
    ops = FluidOperators(pb.fgrid)
    met = ALEMetric(pb.chart, pb.fgrid, shell.eta)
    # the interface node is shell mass: count the fluid half-cell only
    row.update(fluid_kinetic=kinetic_energy(ops, met, fluid.u), gamma_min=gmin,
               J_min=float(np.min(met.J_cells())))
    return row


def time_loop(cfg, problem=None, initial=None, on_step=None, record_fluid=None, frozen=False):
    """Run the splitting scheme from ``t = 0`` to ``cfg.t_end``.

    Parameters
    ----------
    cfg : SimConfig
    problem : Problem, optional
    initial : (ShellState, FluidState), optional
        Skip :func:`project_initial_data`.
    on_step : callable, optional
        ``on_step(step, time, shell, fluid, row)`` after every accepted step
        (and once for the initial state with ``step = 0``).
    record_fluid : int, optional
        Keep every ``record_fluid``-th fluid state in the trajectory
        (default: ``cfg.snapshot_stride``).
    frozen : bool
        Hold the interface fixed in the fluid sub-step (conservation checks).

    Returns
    -------
    Trajectory, EnergyLedger, Outcome
    """
    pb = problem or build_problem(cfg)
    if initial is None:
        shell, fluid, _ = project_initial_data(cfg, pb)
    else:
        shell, fluid = initial
    stride = cfg.snapshot_stride if record_fluid is None else record_fluid
    traj = Trajectory(pb.surface, pb.params, pb.chart)
    ledger = EnergyLedger()
    row = {"step": 0, "time": 0.0, "viscous_dissipation": 0.0, "numerical_dissipation": 0.0,
           **_energies(pb, shell, fluid)}
    ledger.append(row)
    traj.record_shell(0.0, shell)
    if fluid is not None:
        traj.record_fluid(0.0, fluid, shell)
    if on_step:
        on_step(0, 0.0, shell, fluid, ledger.rows[-1])
    dt = cfg.dt
    nsteps = cfg.steps
    t = 0.0
    acc_visc = acc_num = 0.0
    for n in range(1, nsteps + 1):
        try:
            mid, sinfo = structure_step(shell, dt, pb.params, pb.surface, chart=pb.chart,
                                        newton_tol=cfg.newton_tol, gamma_min=cfg.gamma_min,
                                        return_info=True)
            num = sinfo["numerical_dissipation"]
            visc = 0.0
            if fluid is not None:
                fluid, v_new, frec = fluid_step(pb.chart, pb.fgrid, fluid, shell.eta.values,
                                                mid.eta.values, mid.vel.values, dt,
                                                viscosity=cfg.viscosity, solver=pb.solver,
                                                frozen=frozen, lin_tol=cfg.lin_tol)
                if frec["divergence"] > max(cfg.lin_tol, 1e-9):
                    raise SolverFailure(f"divergence residual {frec['divergence']:.3e} "
                                        "after the fluid solve")
                num += frec["numerical_dissipation"]
                visc = frec["viscous_dissipation"]
                shell = ShellState(mid.eta, ScalarField2D(mid.grid, v_new))
            else:
                shell = mid
        except (DisplacementOutOfRange, JacobianNonpositive) as exc:
            return traj, ledger, Outcome("self_intersection", str(exc), n - 1, t)
        except CoercivityLost as exc:
            return traj, ledger, Outcome("coercivity", str(exc), n - 1, t)
        except (NewtonDiverged, SolverFailure) as exc:
            return traj, ledger, Outcome("solver_failure", str(exc), n - 1, t)
        t = n * dt
        # dissipation columns accumulate over the steps between recorded rows
        acc_visc += visc
        acc_num += num
        row = {"step": n, "time": t, "viscous_dissipation": acc_visc,
               "numerical_dissipation": acc_num, **_energies(pb, shell, fluid)}
        if n % cfg.ledger_stride == 0 or n == nsteps:
            ledger.append(row)
            acc_visc = acc_num = 0.0
        traj.record_shell(t, shell)
        if fluid is not None and (n % stride == 0 or n == nsteps):
            traj.record_fluid(t, fluid, shell)
        if on_step:
            on_step(n, t, shell, fluid, ledger.rows[-1] if ledger.rows[-1]["step"] == n else row)
    return traj, ledger, Outcome("final_time", "reached t_end", nsteps, t)
