import numpy as np
import pytest
import scipy.linalg as sla

from koiterfsi import faults
from koiterfsi.errors import JacobianNonpositive
from koiterfsi.geometry import TubularChart, flat_channel
from koiterfsi.solver.coupling import build_problem, project_initial_data
from koiterfsi.solver.fluid import (ALEMetric, FluidOperators, FluidState, SaddleSolver,
                                    divergence_matrix, divergence_residual, fluid_step,
                                    kinetic_energy, mass_weights, viscous_matrix)
from koiterfsi.staggered import FluidGrid, StaggeredField3D
from koiterfsi.validation import pulse_config, suite_frozen

CHART = TubularChart(flat_channel(1.0), 0.25)


def small_problem(**kw):
    cfg = pulse_config(n=8, nz=4, **kw)
    pb = build_problem(cfg)
    shell, fluid, _ = project_initial_data(cfg, pb)
    return cfg, pb, shell, fluid


def test_zero_in_zero_out():
    g = FluidGrid(8, 8, 4)
    z = np.zeros((8, 8))
    state, v, rec = fluid_step(CHART, g, FluidState.zeros(g), z, z, z, 1e-3)
    assert np.all(state.u.velocity_vector() == 0) and np.all(v == 0)
    assert rec["fluid_kinetic"] == 0.0 and rec["viscous_dissipation"] == 0.0


def test_mass_weights_positive_and_unit_jacobian():
    g = FluidGrid(8, 8, 4)
    ops = FluidOperators(g)
    met = ALEMetric(CHART, g, np.zeros((8, 8)))
    np.testing.assert_allclose(mass_weights(ops, met), mass_weights(ops))
    assert np.all(mass_weights(ops) > 0)
    np.testing.assert_allclose(met.J_cells(), 1.0)


def stokes_eigenpair(g):
    """Slowest discrete Stokes mode with the interface held fixed."""
    ops = FluidOperators(g)
    met = ALEMetric(CHART, g, np.zeros((g.n1, g.n2)))
    keep = np.arange(3 * ops.nU - g.M)
    C = divergence_matrix(ops, met).toarray()[:, keep]
    A = viscous_matrix(ops, met).toarray()[np.ix_(keep, keep)]
    m = mass_weights(ops, met)[keep]
    Z = sla.null_space(C)
    lam, Y = sla.eigh(Z.T @ A @ Z, Z.T @ (m[:, None] * Z))
    # skip the constant horizontal flows (lambda = 0)
    j = int(np.argmax(lam > 1e-8))
    x = np.zeros(3 * ops.nU)
    x[keep] = Z @ Y[:, j]
    return lam[j], x


def test_frozen_viscous_decay_matches_eigenvalue():
    g = FluidGrid(8, 8, 4)
    lam, x = stokes_eigenpair(g)
    amp, dt, nu = 1e-9, 1e-2, 0.5
    u = StaggeredField3D.from_velocity_vector(g, amp * x / np.max(np.abs(x)))
    z = np.zeros((g.n1, g.n2))
    state, _, _ = fluid_step(CHART, g, FluidState(u), z, z, z, dt, viscosity=nu,
                             solver=SaddleSolver(g, "direct"), frozen=True)
    x0, x1 = u.velocity_vector(), state.u.velocity_vector()
    big = np.abs(x0) > 0.1 * amp
    np.testing.assert_allclose(x1[big] / x0[big], 1.0 / (1.0 + nu * lam * dt), rtol=1e-6)


def test_frozen_conservation_and_skew_fault():
    cfg = pulse_config(n=8, nz=4, viscosity=0.0, eta1=[],
                       u0=[[1, 1, 0, "sin", 0.5, 1], [2, 0, 1, "cos", 0.4, 2],
                           [3, 1, 1, "cos", 0.3, 1]])
    assert suite_frozen(cfg, steps=20).passed
    with faults.inject("skew_pairing"):
        assert not suite_frozen(cfg, steps=20).passed


@pytest.mark.parametrize("method", ["krylov", "direct"])
def test_step_divergence_free(method):
    cfg, pb, shell, fluid = small_problem(linear_solver=method)
    e = shell.eta.values
    v = shell.vel.values
    _, _, rec = fluid_step(pb.chart, pb.fgrid, fluid, e, e + cfg.dt * v, v, cfg.dt,
                           solver=pb.solver, lin_tol=cfg.lin_tol)
    assert rec["divergence"] <= cfg.lin_tol
    assert rec["J_min"] > 0


def test_direct_and_krylov_agree():
    out = []
    for method in ("krylov", "direct"):
        cfg, pb, shell, fluid = small_problem(linear_solver=method)
        e, v = shell.eta.values, shell.vel.values
        state, vn, rec = fluid_step(pb.chart, pb.fgrid, fluid, e, e + cfg.dt * v, v, cfg.dt,
                                    solver=pb.solver)
        out.append(state.u.velocity_vector())
    np.testing.assert_allclose(out[0], out[1], atol=1e-9 * np.max(np.abs(out[1])))


def test_energy_record_balances():
    cfg, pb, shell, fluid = small_problem()
    e, v = shell.eta.values, shell.vel.values
    ops = FluidOperators(pb.fgrid)
    _, _, rec = fluid_step(pb.chart, pb.fgrid, fluid, e, e + cfg.dt * v, v, cfg.dt, solver=pb.solver)
    assert rec["fluid_kinetic_old"] == pytest.approx(
        kinetic_energy(ops, ALEMetric(pb.chart, pb.fgrid, e), fluid.u), rel=1e-14)
    assert rec["viscous_dissipation"] >= 0 and rec["numerical_dissipation"] >= 0


def test_projected_initial_data_is_solenoidal():
    cfg, pb, shell, fluid = small_problem()
    ops = FluidOperators(pb.fgrid)
    met = ALEMetric(pb.chart, pb.fgrid, shell.eta.values)
    assert divergence_residual(ops, met, fluid.u) < 1e-9
    np.testing.assert_allclose(fluid.u.top, shell.vel.values, atol=1e-10)


def test_nonpositive_jacobian_rejected():
    # the collar ramp must be resolved by the cell centres
    g = FluidGrid(8, 8, 16)
    z = np.zeros((8, 8))
    bad = np.full((8, 8), -0.1)
    with pytest.raises(JacobianNonpositive):
        fluid_step(CHART, g, FluidState.zeros(g), bad, bad, z, 1e-3)
