import json

import pytest

from koiterfsi.config import (SimConfig, config_to_dict, dump_config, load_config, parse_config,
                              validate_config)
from koiterfsi.errors import ParseError, ValidationError


def test_defaults_are_valid():
    cfg = SimConfig()
    assert validate_config(cfg) == []
    assert cfg.kappa == pytest.approx(0.25)
    assert cfg.steps == 200
    assert SimConfig(kind="cylinder", radius=2.0).kappa == pytest.approx(0.5)


def test_empty_object_gives_defaults():
    assert parse_config("{}") == SimConfig()


def test_roundtrip(tmp_path):
    cfg = SimConfig(kind="cylinder", radius=1.5, n1=16, n2=8, n_depth=8, dt=5e-4, t_end=0.01,
                    fluid_enabled=False, reg_eps=0.0, eta0=[[1, 0, "cos", 0.01]],
                    eta1=[[1, 1, "sin", 0.1]], gamma_min=0.1, linear_solver="direct", output_dir="out")
    path = tmp_path / "c.json"
    path.write_text(dump_config(cfg))
    back = load_config(path, use_env=False)
    assert back == cfg
    assert dump_config(back) == dump_config(cfg)


def test_coefficient_velocity_roundtrip():
    cfg = SimConfig(u0=[[1, 1, 0, "sin", 0.5, 1], [3, 0, 1, "cos", 0.2, 2]])
    assert parse_config(dump_config(cfg)) == cfg


def test_nonpositive_dt_rejected():
    d = config_to_dict(SimConfig())
    d["time"]["dt"] = 0.0
    with pytest.raises(ValidationError) as exc:
        parse_config(json.dumps(d))
    assert any(v.startswith("dt") for v in exc.value.violations)


def test_collar_violation_cites_bound():
    d = config_to_dict(SimConfig())
    d["initial"]["eta0"] = [[1, 0, "cos", 0.9]]
    with pytest.raises(ValidationError) as exc:
        parse_config(json.dumps(d))
    msg = " ".join(exc.value.violations)
    assert "eta0" in msg and "alpha(Omega)+kappa" in msg


def test_all_violations_listed():
    d = config_to_dict(SimConfig())
    d["time"]["dt"] = -1.0
    d["shell"]["thickness"] = 0.0
    with pytest.raises(ValidationError) as exc:
        parse_config(json.dumps(d))
    assert len(exc.value.violations) >= 2


@pytest.mark.parametrize("patch", [
    {"grid": {"n_omega": 7}},
    {"geometry": {"kind": "torus"}},
    {"linear_solver": "magic"},
    {"bogus": 1},
    {"time": {"dt": "fast"}},
    {"fluid": {"enabled": 1}},
    {"initial": {"eta0": [[1, 0, "tan", 0.1]]}},
])
def test_bad_fields_rejected(patch):
    with pytest.raises(ValidationError):
        parse_config(json.dumps(patch))


def test_parse_error_reports_line():
    text = '{\n  "time": {\n    "dt": 0.1,\n  }\n}'
    with pytest.raises(ParseError) as exc:
        parse_config(text)
    assert exc.value.line == 4


def test_output_dir_from_environment(tmp_path, monkeypatch):
    path = tmp_path / "c.json"
    path.write_text(dump_config(SimConfig()))
    monkeypatch.setenv("FSI_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    assert load_config(path).output_dir == str(tmp_path / "elsewhere")
    assert load_config(path, use_env=False).output_dir == "fsi_out"
