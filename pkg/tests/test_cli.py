import csv
import json

import numpy as np
import pytest

from koiterfsi.cli import main
from koiterfsi.config import SimConfig, dump_config
from koiterfsi.solver.coupling import EnergyLedger


def write_config(tmp_path, name, **kw):
    kw.setdefault("output_dir", str(tmp_path / name))
    cfg = SimConfig(**kw)
    path = tmp_path / f"{name}.json"
    path.write_text(dump_config(cfg))
    return path, cfg


def small(**kw):
    base = dict(n1=8, n2=8, n_depth=4, dt=1e-3, t_end=0.004, snapshot_stride=2)
    base.update(kw)
    return base


@pytest.fixture(autouse=True)
def no_env(monkeypatch):
    monkeypatch.delenv("FSI_OUTPUT_DIR", raising=False)


def test_run_zero_config(tmp_path, capsys):
    path, cfg = write_config(tmp_path, "zero", **small())
    assert main(["run", str(path)]) == 0
    out = tmp_path / "zero"
    ledger = EnergyLedger.read_csv(out / "ledger.csv")
    assert len(ledger) == cfg.steps + 1
    assert np.all(ledger.column("total") == 0.0)
    assert json.loads((out / "outcome.json").read_text())["arm"] == "final_time"
    assert sorted(p.name for p in out.glob("snap_*.bin")) == [
        "snap_0000000.bin", "snap_0000002.bin", "snap_0000004.bin"]
    assert "final_time" in capsys.readouterr().out


def test_coercivity_breach_exit_code(tmp_path, capsys):
    path, _ = write_config(tmp_path, "cyl", kind="cylinder", fluid_enabled=False, n1=16, n2=16,
                           dt=1e-3, t_end=0.01, gamma_min=0.99, eta0=[[0, 0, "cos", -0.02]])
    assert main(["run", str(path)]) == 5
    out = capsys.readouterr().out
    assert "coercivity" in out and "final monitor row" in out and "gamma_min=" in out
    with open(tmp_path / "cyl" / "monitors.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[-1]["gamma_min"]) <= 0.99


def test_run_is_deterministic(tmp_path):
    kw = small(eta0=[[1, 0, "cos", 0.005]], eta1=[[1, 1, "sin", 0.05]], u0="lifted")
    a, _ = write_config(tmp_path, "a", **kw)
    b, _ = write_config(tmp_path, "b", **kw)
    assert main(["run", str(a)]) == 0
    assert main(["run", str(b)]) == 0
    assert (tmp_path / "a" / "ledger.csv").read_bytes() == (tmp_path / "b" / "ledger.csv").read_bytes()


def test_run_rejects_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"time": {"dt": 0}}))
    assert main(["run", str(path)]) == 2
    assert "dt" in capsys.readouterr().err
    path.write_text("{ nope")
    assert main(["run", str(path)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2


def test_incompatible_initial_data(tmp_path):
    path, _ = write_config(tmp_path, "mean", **small(eta1=[[0, 0, "cos", 0.01]]))
    assert main(["run", str(path)]) == 2


def test_diagnose_tables(tmp_path, capsys):
    p0, _ = write_config(tmp_path, "zero", **small())
    p1, _ = write_config(tmp_path, "pulse", **small(eta0=[[1, 0, "cos", 0.005]],
                                                    eta1=[[1, 1, "sin", 0.05]], u0="lifted"))
    assert main(["run", str(p0)]) == 0 and main(["run", str(p1)]) == 0
    assert main(["diagnose", str(tmp_path / "zero"), "--s", "0.25"]) == 0
    with open(tmp_path / "zero" / "diagnostics.csv") as fh:
        row = next(csv.DictReader(fh))
    for k in ("w14", "h2", "nikolskii", "vel_hs", "defect", "grad3", "korn_gap"):
        assert float(row[k]) == 0.0
    table = tmp_path / "merged.csv"
    assert main(["diagnose", str(tmp_path / "zero"), str(tmp_path / "pulse"), "--s", "0.25",
                 "--out", str(table)]) == 0
    with open(table) as fh:
        rows = list(csv.DictReader(fh))
    assert [r["run"] for r in rows] == ["zero", "pulse"]
    assert float(rows[1]["nikolskii"]) > 0


def test_diagnose_argument_errors(tmp_path):
    assert main(["diagnose", str(tmp_path), "--s", "0.25"]) == 2
    assert main(["diagnose", str(tmp_path), "--s", "0.7"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["diagnose", str(tmp_path)])
    assert exc.value.code == 2


@pytest.mark.parametrize("which", ["cylinder", "flat", "sphere-table"])
def test_geometry_tables(which, capsys):
    assert main(["geometry", which]) == 0
    out = capsys.readouterr().out
    if which == "sphere-table":
        diffs = [float(line.split()[-1]) for line in out.splitlines()[1:]]
        assert len(diffs) == 7
    else:
        diffs = [float(out.splitlines()[-1].split()[-1])]
    assert max(diffs) < 1e-12


def test_unknown_verb_and_fault():
    with pytest.raises(SystemExit) as exc:
        main(["explode"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["validate", "--inject", "nonsense"])
    assert exc.value.code == 2


@pytest.mark.slow
def test_validate_detects_injected_fault(capsys):
    assert main(["validate", "--inject", "simpson_weights"]) == 1
    out = capsys.readouterr().out
    assert "fault injected: simpson_weights" in out and "FAIL" in out
