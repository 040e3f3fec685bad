"""
Property suites behind ``fsi validate`` and the acceptance tests.

Every suite returns a :class:`SuiteResult` carrying the measured quantity and
the baseline it is judged against.  Problem sizes are arguments, so the CLI
runs desk-sized variants and the test suite the full ones.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig
from .discrete import fourier_field
from .geometry import (TubularChart, cylinder, flat_channel, gamma, gamma_from_frame,
                       sphere_frame)
from .shell import (DisplacementJet, ShellParams, curvature_change, frechet_forms,
                    jet_from_field, koiter_energy, metric_change, simpson_tensor)
from .staggered import FluidGrid

__all__ = [
    "SuiteResult",
    "cylinder_closed_forms",
    "suite_geometry",
    "suite_telescoping",
    "suite_frechet",
    "suite_extension",
    "suite_energy",
    "suite_frozen",
    "suite_korn",
    "suite_eps",
    "suite_splitting",
    "suite_monitors",
    "run_all",
]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    measured: float
    baseline: float
    detail: str = ""
    seconds: float = 0.0
    data: dict = field(default_factory=dict, repr=False)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag}  {self.name:<20} measured={self.measured:.3e}  "
                f"baseline={self.baseline:.3e}  ({self.seconds:.1f}s) {self.detail}").rstrip()


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def cylinder_closed_forms(R, eta, e1, e2, e11, e12, e22):
    """``gamma``, ``G`` and ``R`` of the cylinder written out by hand.

    ``e1, e2`` are the angular and axial derivatives of ``eta`` and
    ``e11, e12, e22`` its second derivatives.
    """
    g = 1 + eta / R
    G = np.array([[(R + eta) ** 2 + e1**2 - R**2, e1 * e2], [e1 * e2, e2**2]])
    R11 = g * e11 - (eta + R) ** 2 / R - 2 * e1**2 / R + R
    R12 = g * e12 - e1 * e2 / R
    Rm = np.array([[R11, R12], [R12, g * e22]])
    return g, G, Rm


def _point_jet(eta, grad, hess):
    return DisplacementJet(np.asarray(eta), np.asarray(grad), np.asarray(hess))


@_timed
def suite_geometry(n_points=1000, seed=0, tol=1e-10, radius=1.3):
    """Cylinder ``gamma, G, R`` against closed forms and the sphere ``gamma`` table."""
    rng = np.random.default_rng(seed)
    surf = cylinder(radius, 2.0)
    y = (rng.uniform(0, 2 * np.pi, n_points), rng.uniform(0, 2.0, n_points))
    eta = rng.uniform(-0.5 * radius, 0.5 * radius, n_points)
    d = rng.standard_normal((5, n_points))
    grad = d[:2]
    hess = np.array([[d[2], d[3]], [d[3], d[4]]])
    jet = _point_jet(eta, grad, hess)
    g_ref, G_ref, R_ref = cylinder_closed_forms(radius, eta, *grad, d[2], d[3], d[4])
    errs = {
        "gamma": np.max(np.abs(gamma(surf, y, eta) - g_ref)) / np.max(np.abs(g_ref)),
        "G": np.max(np.abs(metric_change(surf, jet, y) - G_ref)) / np.max(np.abs(G_ref)),
        "R": np.max(np.abs(curvature_change(surf, jet, y) - R_ref)) / np.max(np.abs(R_ref)),
    }
    th, ph = rng.uniform(0, 2 * np.pi, 64), rng.uniform(0.2, np.pi - 0.2, 64)
    es = np.linspace(-0.9 * radius, 0.9 * radius, 64)
    gs = gamma_from_frame(sphere_frame(radius, th, ph), es)
    errs["sphere"] = float(np.max(np.abs(gs - (es - radius) ** 2 / radius**2)))
    worst = max(errs.values())
    detail = " ".join(f"{k}={v:.1e}" for k, v in errs.items())
    return SuiteResult("geometry", worst <= tol, worst, tol, detail, data=errs)


def _generic_field(grid, rng, sup, kmax=2):
    """Every mode with ``|k1|, |k2| <= kmax`` present, rescaled to sup-norm ``sup``."""
    modes = [(k1, k2, kind, rng.standard_normal())
             for k1 in range(0, kmax + 1) for k2 in range(-kmax, kmax + 1)
             for kind in ("cos", "sin") if (k1, k2) != (0, 0) or kind == "cos"]
    f = fourier_field(grid, modes)
    return f * (sup / float(np.max(np.abs(f.values))))


@_timed
def suite_telescoping(n_pairs=100, n=16, seed=1, tol=1e-11):
    """Simpson secant derivative applied to ``eta_b - eta_a`` against ``T(eta_b) - T(eta_a)``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_pairs):
        surf = flat_channel(1.0) if k % 2 == 0 else cylinder(1.0)
        grid = surf.grid(n, n)
        ja = jet_from_field(_generic_field(grid, rng, 0.1))
        jb = jet_from_field(_generic_field(grid, rng, 0.1))
        for which, T in (("G", metric_change), ("R", curvature_change)):
            lhs = simpson_tensor(surf, which, ja, jb, jb - ja)
            rhs = T(surf, jb) - T(surf, ja)
            worst = max(worst, float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(rhs)))))
    return SuiteResult("telescoping", worst <= tol, worst, tol, f"{n_pairs} pairs")


@_timed
def suite_frechet(n_pairs=20, n=16, seed=2, step=1e-5, tol=1e-6):
    """Membrane and bending forms against central differences of the energy.

    Both ``eta`` and the direction ``xi`` are generic low-mode fields of
    sup-norm 0.1, so the ``O(step^2)`` truncation of the central difference
    stays well below ``tol``.
    """
    rng = np.random.default_rng(seed)
    params = ShellParams(1.0, 1.0, 1.0, 0.0)
    worst = 0.0
    for k in range(n_pairs):
        surf = flat_channel(1.0) if k % 2 == 0 else cylinder(1.0)
        grid = surf.grid(n, n)
        eta = _generic_field(grid, rng, 0.1)
        xi = _generic_field(grid, rng, 0.1)
        am, ab = frechet_forms(surf, params, jet_from_field(eta), xi)
        ep = koiter_energy(surf, params, jet_from_field(eta + step * xi))
        em = koiter_energy(surf, params, jet_from_field(eta - step * xi))
        for exact, p, m in ((am, ep[0], em[0]), (ab, ep[1], em[1])):
            fd = (p - m) / (2 * step)
            worst = max(worst, abs(float(np.real(exact)) - fd) / max(abs(fd), 1e-300))
    return SuiteResult("frechet", worst <= tol, worst, tol, f"{n_pairs} pairs")


def _extension_basis(grid):
    modes = [(1, 0, "cos"), (0, 1, "sin"), (1, 1, "cos"), (2, 1, "sin"), (1, 2, "cos")]
    return [fourier_field(grid, [(k1, k2, kind, 1.0), (0, 0, "cos", 0.2)])
            for k1, k2, kind in modes]


@_timed
def suite_extension(sizes=(16, 32), kappa=0.25, floor=1e-12, slack=1.5):
    """Divergence, trace and support of :func:`solenoidal_extend` under refinement.

    Errors ``e_N`` must satisfy ``e_N <= max(slack * e_N0 * (N0/N)^2, floor)``
    and the field must vanish identically below the collar.
    """
    from .extension import extension_residuals, solenoidal_extend

    chart = TubularChart(flat_channel(1.0), kappa)
    div, trace, supp = [], [], 0.0
    for N in sizes:
        g = FluidGrid(N, N, N)
        om = g.omega
        eta = fourier_field(om, [(1, 0, "cos", 0.02), (1, 1, "sin", 0.01)])
        d = t = 0.0
        for xi in _extension_basis(om):
            u = solenoidal_extend(chart, eta, xi, g)
            r = extension_residuals(chart, eta, u, xi)
            d, t = max(d, r["divergence"]), max(t, r["trace"])
            supp = max(supp, r["support"])
        div.append(d)
        trace.append(t)
    ok = supp == 0.0
    worst = 0.0
    for errs in (div, trace):
        for N, e in zip(sizes, errs):
            bound = max(slack * errs[0] * (sizes[0] / N) ** 2, floor)
            ok &= e <= bound
            worst = max(worst, e)
    detail = "div=" + ",".join(f"{e:.1e}" for e in div) + " trace=" + ",".join(
        f"{e:.1e}" for e in trace) + f" support={supp:.1e}"
    return SuiteResult("extension", bool(ok), worst, floor, detail,
                       data={"divergence": div, "trace": trace, "support": supp})


def pulse_config(n=16, nz=8, dt=1e-3, t_end=0.02, **kw):
    """Small-amplitude pulse scenario on the flat channel."""
    base = dict(n1=n, n2=n, n_depth=nz, dt=dt, t_end=t_end, eta0=[[1, 0, "cos", 0.005]],
                eta1=[[1, 1, "sin", 0.05], [2, 0, "cos", 0.03]], u0="lifted",
                snapshot_stride=10**6)
    base.update(kw)
    return SimConfig(**base)


@_timed
def suite_energy(cfg=None, rel_tol=1e-8):
    """Total ledger energy (plus viscous loss) never increases beyond ``rel_tol * E0``."""
    from .solver.coupling import time_loop

    cfg = cfg or pulse_config()
    traj, ledger, outcome = time_loop(cfg)
    E0 = ledger.column("total")[0]
    inc = ledger.energy_increments()
    worst = float(np.max(inc)) / E0 if inc.size else 0.0
    ok = outcome.ok and worst <= rel_tol and len(ledger) == cfg.steps + 1
    defect = float(np.max(np.abs(ledger.balance_defects()))) / E0
    return SuiteResult("energy", ok, worst, rel_tol,
                       f"{cfg.steps} steps, {outcome.arm}, balance defect {defect:.1e}",
                       data={"trajectory": traj, "ledger": ledger, "config": cfg})


@_timed
def suite_frozen(cfg=None, steps=5, tol=None):
    """Inviscid fluid with a frozen interface: kinetic energy changes only by the
    recorded numerical dissipation, so the skew convection does no work."""
    from .solver.coupling import build_problem, project_initial_data
    from .solver.fluid import fluid_step

    cfg = cfg or pulse_config(viscosity=0.0, eta1=[],
                              u0=[[1, 1, 0, "sin", 0.5, 1], [2, 0, 1, "cos", 0.4, 2],
                                  [3, 1, 1, "cos", 0.3, 1]])
    tol = cfg.lin_tol if tol is None else tol
    pb = build_problem(cfg)
    shell, fluid, _ = project_initial_data(cfg, pb)
    e = shell.eta.values
    zero = np.zeros_like(e)
    worst = 0.0
    for _ in range(steps):
        fluid, _, rec = fluid_step(pb.chart, pb.fgrid, fluid, e, e, zero, cfg.dt,
                                   viscosity=0.0, solver=pb.solver, frozen=True,
                                   lin_tol=cfg.lin_tol)
        d = rec["fluid_kinetic"] - rec["fluid_kinetic_old"] + rec["numerical_dissipation"]
        worst = max(worst, abs(d) / rec["fluid_kinetic_old"])
    return SuiteResult("frozen_conservation", worst <= tol, worst, tol, f"{steps} steps")


@_timed
def suite_korn(sizes=(16, 32), steps=12, skip=5, dt=1e-3, limit=0.05):
    """Korn gap on coupled snapshots, maximised over ``skip*dt <= t <= steps*dt``.

    The first ``skip`` steps are left out: the ``L2`` projection of the
    initial velocity leaves tangential slip on the walls, and the viscous
    layer it sheds is sharper on finer grids until it has diffused.  The gap
    must stay below ``limit`` at the coarsest grid and shrink under refinement.
    """
    from .solver.coupling import time_loop
    from .solver.diagnostics import korn_check

    gaps = []
    for N in sizes:
        cfg = SimConfig(n1=N, n2=N, n_depth=N, dt=dt, t_end=steps * dt,
                        eta0=[[1, 0, "cos", 0.01]], eta1=[[1, 1, "sin", 0.1], [0, 1, "cos", 0.05]],
                        u0="lifted")
        traj, _, outcome = time_loop(cfg, record_fluid=1)
        if not outcome.ok:
            return SuiteResult("korn", False, np.inf, limit, outcome.message)
        g = 0.0
        for t, fl, sh in zip(traj.fluid_times, traj.fluids, traj.fluid_shells):
            if t >= skip * dt - 1e-12:
                lhs, _, gap = korn_check(fl, sh, traj.chart)
                g = max(g, abs(gap) / lhs)
        gaps.append(g)
    ok = gaps[0] <= limit and all(b < a for a, b in zip(gaps, gaps[1:]))
    return SuiteResult("korn", ok, gaps[0], limit, "gaps=" + ",".join(f"{g:.2e}" for g in gaps),
                       data={"gaps": gaps})


def eps_config(reg_eps, n=32, dt=2.5e-5, t_end=0.01, lame=20.0, slope=1.25, amp=0.02):
    """Shell-only scenario started from a rough velocity with spectrum ``|k|^-slope``.

    Stiff bending (``lame``) keeps the low modes, which carry the Nikolskii
    quantity, out of reach of the regularisation for every ``reg_eps`` of the
    study, while the short steps let the high modes that carry
    ``|grad^3 eta|`` respond before numerical damping sets in.
    """
    modes = []
    for k1 in range(0, n // 2):
        for k2 in range(0, n // 2):
            k = np.hypot(k1, k2)
            if k == 0 or k > n // 2 - 1:
                continue
            modes.append([k1, k2, "cos" if (k1 + k2) % 2 else "sin", amp * k**-slope])
    return SimConfig(n1=n, n2=n, dt=dt, t_end=t_end, reg_eps=reg_eps, lame_lambda=lame,
                     lame_mu=lame, fluid_enabled=False, eta1=modes, snapshot_stride=10**6)


@_timed
def suite_eps(eps_values=(1e-2, 1e-3, 1e-4), s=0.25, max_ratio=2.0, min_growth=2.0, **scenario):
    """The time-integrated Nikolskii quantity is insensitive to ``eps`` while
    ``sup_t |grad^3 eta|`` grows monotonically (at least ``min_growth``-fold)
    as ``eps`` decreases.  ``scenario`` is passed to :func:`eps_config`."""
    from .solver.coupling import time_loop
    from .solver.diagnostics import regularity_diagnostics

    nik, g3, runs = [], [], []
    for eps in eps_values:
        traj, ledger, outcome = time_loop(eps_config(eps, **scenario))
        if not outcome.ok:
            return SuiteResult("eps_uniformity", False, np.inf, max_ratio, outcome.message)
        d = regularity_diagnostics(traj, s, with_defect=False, korn=False)
        nik.append(d["nikolskii"])
        g3.append(d["grad3"])
        runs.append((traj, ledger))
    ratio = max(nik) / min(nik)
    growth = g3[-1] / g3[0]
    ok = ratio < max_ratio and growth >= min_growth and all(b > a for a, b in zip(g3, g3[1:]))
    detail = ("nikolskii=" + ",".join(f"{v:.3e}" for v in nik) + " grad3="
              + ",".join(f"{v:.3e}" for v in g3) + f" growth={growth:.2f}")
    return SuiteResult("eps_uniformity", ok, ratio, max_ratio, detail,
                       data={"nikolskii": nik, "grad3": g3, "runs": runs})


@_timed
def suite_splitting(dt0=0.01, t_end=0.1, n=16, nz=8, band=2.0):
    """First-order self-convergence of the ledger total at ``t_end``.

    With ``d_k = |E(dt_k) - E(dt_k/2)|`` the constants ``C_k = d_k / dt_k`` of
    two successive halvings must agree within a factor ``band``.
    """
    from .solver.coupling import time_loop

    totals, runs = [], []
    for dt in (dt0, dt0 / 2, dt0 / 4):
        cfg = pulse_config(n, nz, dt=dt, t_end=t_end)
        traj, ledger, outcome = time_loop(cfg)
        if not outcome.ok:
            return SuiteResult("splitting", False, np.inf, band, outcome.message)
        totals.append(ledger.column("total")[-1])
        runs.append((traj, ledger))
    C1 = abs(totals[0] - totals[1]) / dt0
    C2 = abs(totals[1] - totals[2]) / (dt0 / 2)
    ratio = max(C1, C2) / min(C1, C2)
    detail = f"C={C1:.3e},{C2:.3e} totals=" + ",".join(f"{v:.10e}" for v in totals)
    return SuiteResult("splitting", ratio <= band, ratio, band, detail,
                       data={"totals": totals, "C": (C1, C2), "runs": runs})


@_timed
def suite_monitors(runs, factor=10.0):
    """``sup_t |grad eta|_{L4}`` and ``sup_t int gamma^2 |hess eta|^2`` against
    ``factor`` times their energy-calibrated baselines, over every given run.

    ``runs`` is an iterable of ``(trajectory, ledger)`` pairs.
    """
    from .solver.diagnostics import monitor_baselines, w14_norm, weighted_h2

    worst = 0.0
    for traj, ledger in runs:
        E0 = ledger.column("total")[0]
        grid = traj.etas[0].grid
        base = monitor_baselines(traj.surface, traj.params, grid, E0)
        w14 = max(w14_norm(e) for e in traj.etas)
        h2 = max(weighted_h2(traj.surface, e) for e in traj.etas)
        for val, ref in ((w14, base["w14"]), (h2, base["h2"])):
            worst = max(worst, val / ref if ref > 0 else (0.0 if val == 0 else np.inf))
    return SuiteResult("monitors", worst <= factor, worst, factor)


def run_all(out=print):
    """Desk-sized variants of every suite; returns the list of results."""
    results = [suite_geometry(200), suite_telescoping(10), suite_frechet(4),
               suite_extension((16, 32))]
    energy = suite_energy(pulse_config(t_end=0.01))
    results.append(energy)
    results.append(suite_frozen(steps=3))
    results.append(suite_korn((8, 16)))
    results.append(suite_monitors([(energy.data["trajectory"], energy.data["ledger"])]))
    for r in results:
        out(r.line())
    return results
