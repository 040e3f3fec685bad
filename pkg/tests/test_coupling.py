import numpy as np
import pytest

from koiterfsi.config import SimConfig
from koiterfsi.errors import IncompatibleData
from koiterfsi.solver.coupling import (LEDGER_COLUMNS, EnergyLedger, build_problem,
                                       project_initial_data, time_loop)
from koiterfsi.validation import pulse_config


def test_zero_data_gives_zero_ledger():
    cfg = pulse_config(n=8, nz=4, eta0=[], eta1=[], u0="zero", t_end=0.005)
    traj, ledger, outcome = time_loop(cfg)
    assert outcome.ok and len(ledger) == cfg.steps + 1
    for c in ("fluid_kinetic", "shell_kinetic", "membrane", "bending", "regularization",
              "total", "viscous_dissipation", "numerical_dissipation"):
        assert np.all(ledger.column(c) == 0.0)
    assert np.all(traj.etas[-1].values == 0.0)


@pytest.fixture(scope="module")
def pulse_run():
    cfg = pulse_config(n=8, nz=8, t_end=0.02)
    return cfg, *time_loop(cfg)


def test_pulse_energy_nonincreasing(pulse_run):
    cfg, traj, ledger, outcome = pulse_run
    assert outcome.ok
    E0 = ledger.column("total")[0]
    assert E0 > 0
    assert np.max(ledger.energy_increments()) <= 1e-8 * E0
    assert np.max(np.abs(ledger.balance_defects())) <= 1e-8 * E0
    assert np.all(ledger.column("J_min") > 0)


def test_ledger_columns_and_total(pulse_run):
    _, _, ledger, _ = pulse_run
    assert EnergyLedger.columns == LEDGER_COLUMNS
    parts = sum(ledger.column(c) for c in ("fluid_kinetic", "shell_kinetic", "membrane",
                                           "bending", "regularization"))
    np.testing.assert_allclose(ledger.column("total"), parts, rtol=1e-12)
    np.testing.assert_array_equal(ledger.column("step"), np.arange(len(ledger)))


def test_ledger_csv_roundtrip(pulse_run, tmp_path):
    _, _, ledger, _ = pulse_run
    path = tmp_path / "ledger.csv"
    ledger.write_csv(path)
    back = EnergyLedger.read_csv(path)
    for c in LEDGER_COLUMNS:
        np.testing.assert_array_equal(back.column(c), ledger.column(c))
    parts = sum(back.column(c) for c in ("fluid_kinetic", "shell_kinetic", "membrane",
                                         "bending", "regularization"))
    np.testing.assert_allclose(back.column("total"), parts, rtol=1e-12)


def test_ledger_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        EnergyLedger.read_csv(path)


def test_ledger_stride_accumulates_dissipation():
    full = time_loop(pulse_config(n=8, nz=4, t_end=0.006))[1]
    sparse = time_loop(pulse_config(n=8, nz=4, t_end=0.006, ledger_stride=3))[1]
    assert len(sparse) == 3
    for c in ("viscous_dissipation", "numerical_dissipation"):
        np.testing.assert_allclose(sparse.column(c)[1:],
                                   full.column(c)[1:].reshape(2, 3).sum(axis=1), rtol=1e-9)


def test_mean_interface_velocity_rejected():
    cfg = pulse_config(n=8, nz=4, eta1=[[0, 0, "cos", 0.01]])
    with pytest.raises(IncompatibleData):
        project_initial_data(cfg)


def test_lifted_initial_trace():
    cfg = pulse_config(n=8, nz=8)
    shell, fluid, report = project_initial_data(cfg)
    assert report["trace"] <= 1e-10
    assert report["divergence"] <= 1e-9
    np.testing.assert_allclose(fluid.u.top, shell.vel.values, atol=1e-10)


def test_shell_only_problem():
    cfg = SimConfig(fluid_enabled=False, n1=8, n2=8, dt=1e-3, t_end=0.003,
                    eta0=[[1, 0, "cos", 0.01]])
    pb = build_problem(cfg)
    assert pb.fgrid is None
    traj, ledger, outcome = time_loop(cfg, pb)
    assert outcome.ok
    assert np.all(ledger.column("fluid_kinetic") == 0.0)
    assert np.max(ledger.energy_increments()) <= 1e-10 * ledger.column("total")[0]


def test_coercivity_arm():
    cfg = SimConfig(kind="cylinder", radius=1.0, fluid_enabled=False, n1=16, n2=16,
                    dt=1e-3, t_end=0.01, gamma_min=0.99, eta0=[[0, 0, "cos", -0.02]])
    _, ledger, outcome = time_loop(cfg)
    assert outcome.arm == "coercivity" and not outcome.ok
    assert outcome.steps == len(ledger) - 1


def test_self_intersection_arm():
    cfg = SimConfig(fluid_enabled=False, n1=8, n2=8, dt=1e-2, t_end=0.5,
                    eta1=[[0, 0, "cos", -2.0]])
    _, _, outcome = time_loop(cfg)
    assert outcome.arm == "self_intersection"


def test_on_step_sees_every_step():
    cfg = pulse_config(n=8, nz=4, t_end=0.004)
    seen = []
    time_loop(cfg, on_step=lambda n, t, sh, fl, row: seen.append((n, row["step"])))
    assert [s for s, _ in seen] == list(range(cfg.steps + 1))
