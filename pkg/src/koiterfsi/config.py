"""
Run configuration: JSON schema, defaults, validation and round-trip.

Layout of the JSON document (every key optional except where noted)::

    {
      "geometry":   {"kind": "flat", "depth": 1.0}        # or {"kind": "cylinder", "radius": R, "length": L}
      "grid":       {"n_omega": 32, "n_depth": 16},       # n_omega may be [n1, n2]
      "time":       {"dt": 1e-3, "t_end": 0.2},
      "shell":      {"thickness": 1, "lame_lambda": 1, "lame_mu": 1, "reg_eps": 1e-3},
      "fluid":      {"viscosity": 1.0, "enabled": true},
      "kappa":      0.25,                                   # default 0.25 * depth (or radius)
      "initial":    {"eta0": [[k1, k2, "cos", amp], ...], "eta1": [...], "u0": "zero"},
      "tolerances": {"newton_tol": 1e-10, "lin_tol": 1e-10, "gamma_min": 0.0},
      "output":     {"ledger_stride": 1, "snapshot_stride": 10, "directory": "fsi_out"},
      "seed": 0,
      "linear_solver": "krylov"
    }

``u0`` is ``"zero"``, ``"lifted"`` (divergence-free lift of ``eta1``) or a
list of ``[component, k1, k2, kind, amplitude, m]`` entries, each adding
``amplitude * trig(2 pi (k1 y1 + k2 y2)) * sin(m pi (s - s_bot) / depth)``
to velocity component 1, 2 or 3 before projection.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import ReferenceSurface, TubularChart

__all__ = ["SimConfig", "load_config", "parse_config", "dump_config", "config_to_dict",
           "validate_config"]

_MODE_KINDS = ("cos", "sin")


@dataclass
class SimConfig:
    """Validated simulation configuration (flat record of the JSON sections)."""

    kind: str = "flat"
    depth: float = 1.0
    radius: float = 1.0
    length: float = 1.0
    n1: int = 32
    n2: int = 32
    n_depth: int = 16
    dt: float = 1e-3
    t_end: float = 0.2
    thickness: float = 1.0
    lame_lambda: float = 1.0
    lame_mu: float = 1.0
    reg_eps: float = 1e-3
    viscosity: float = 1.0
    fluid_enabled: bool = True
    kappa: float | None = None
    eta0: list = field(default_factory=list)
    eta1: list = field(default_factory=list)
    u0: object = "zero"
    newton_tol: float = 1e-10
    lin_tol: float = 1e-10
    gamma_min: float = 0.0
    ledger_stride: int = 1
    snapshot_stride: int = 10
    output_dir: str = "fsi_out"
    seed: int = 0
    linear_solver: str = "krylov"

    def __post_init__(self):
        if self.kappa is None:
            self.kappa = 0.25 * (self.depth if self.kind == "flat" else self.radius)

    @property
    def surface(self):
        if self.kind == "flat":
            return ReferenceSurface("flat", depth=self.depth)
        return ReferenceSurface("cylinder", radius=self.radius, length=self.length)

    @property
    def chart(self):
        return TubularChart(self.surface, self.kappa)

    @property
    def steps(self):
        return int(round(self.t_end / self.dt))


_SECTIONS = {
    "geometry": {"kind": "kind", "depth": "depth", "radius": "radius", "length": "length"},
    "grid": {"n_omega": None, "n_depth": "n_depth"},
    "time": {"dt": "dt", "t_end": "t_end"},
    "shell": {"thickness": "thickness", "lame_lambda": "lame_lambda", "lame_mu": "lame_mu",
              "reg_eps": "reg_eps"},
    "fluid": {"viscosity": "viscosity", "enabled": "fluid_enabled"},
    "initial": {"eta0": "eta0", "eta1": "eta1", "u0": "u0"},
    "tolerances": {"newton_tol": "newton_tol", "lin_tol": "lin_tol", "gamma_min": "gamma_min"},
    "output": {"ledger_stride": "ledger_stride", "snapshot_stride": "snapshot_stride",
               "directory": "output_dir"},
}
_TOP = {"kappa": "kappa", "seed": "seed", "linear_solver": "linear_solver"}


def _mode_list(name, value, problems):
    out = []
    if not isinstance(value, list):
        problems.append(f"{name}: expected a list of [k1, k2, kind, amplitude] modes")
        return out
    for i, m in enumerate(value):
        if (not isinstance(m, (list, tuple)) or len(m) != 4 or m[2] not in _MODE_KINDS
                or not all(isinstance(v, (int, float)) for v in (m[0], m[1], m[3]))):
            problems.append(f"{name}[{i}]: expected [k1, k2, 'cos'|'sin', amplitude]")
            continue
        out.append([int(m[0]), int(m[1]), m[2], float(m[3])])
    return out


def _u0_spec(value, problems):
    if value in ("zero", "lifted"):
        return value
    if isinstance(value, list):
        out = []
        for i, m in enumerate(value):
            ok = (isinstance(m, (list, tuple)) and len(m) == 6 and m[0] in (1, 2, 3)
                  and m[3] in _MODE_KINDS and isinstance(m[5], int) and m[5] >= 1)
            if not ok:
                problems.append(f"initial.u0[{i}]: expected [component, k1, k2, kind, amplitude, m]")
                continue
            out.append([int(m[0]), int(m[1]), int(m[2]), m[3], float(m[4]), int(m[5])])
        return out
    problems.append("initial.u0: expected 'zero', 'lifted' or a coefficient list")
    return value


def _mode_bound(modes):
    return sum(abs(m[3]) for m in modes)


def validate_config(cfg):
    """Return the list of violated invariants (empty when valid)."""
    p = []
    if cfg.kind not in ("flat", "cylinder"):
        p.append(f"geometry.kind: unknown kind {cfg.kind!r}")
        return p
    for name in ("depth", "radius", "length", "thickness", "lame_lambda", "lame_mu"):
        if not getattr(cfg, name) > 0:
            p.append(f"{name}: must be positive")
    for name in ("dt", "t_end"):
        if not getattr(cfg, name) > 0:
            p.append(f"{name}: must be positive")
    if cfg.reg_eps < 0:
        p.append("reg_eps: must be nonnegative")
    if cfg.viscosity < 0:
        p.append("viscosity: must be nonnegative")
    for name in ("newton_tol", "lin_tol"):
        if not getattr(cfg, name) > 0:
            p.append(f"{name}: tolerance must be positive")
    if cfg.gamma_min < 0:
        p.append("gamma_min: must be nonnegative")
    for name in ("n1", "n2"):
        n = getattr(cfg, name)
        if not (isinstance(n, int) and n >= 8 and n % 2 == 0):
            p.append(f"grid.n_omega: {name} = {n} must be even and >= 8")
    if not (isinstance(cfg.n_depth, int) and cfg.n_depth >= 2):
        p.append("grid.n_depth: must be an integer >= 2")
    for name in ("ledger_stride", "snapshot_stride"):
        if not (isinstance(getattr(cfg, name), int) and getattr(cfg, name) >= 1):
            p.append(f"output.{name}: must be a positive integer")
    if cfg.linear_solver not in ("krylov", "direct"):
        p.append("linear_solver: must be 'krylov' or 'direct'")
    if cfg.fluid_enabled and cfg.kind != "flat":
        p.append("fluid.enabled: the fluid solver supports the flat channel only")
    scale = cfg.depth if cfg.kind == "flat" else cfg.radius
    if not 0 < cfg.kappa < scale:
        p.append(f"kappa: must lie in (0, {scale:g})")
        return p
    if cfg.dt > 0 and cfg.t_end > 0 and abs(cfg.t_end / cfg.dt - round(cfg.t_end / cfg.dt)) > 1e-9:
        p.append("t_end: must be a whole number of steps dt")
    chart = cfg.chart
    bound = _mode_bound(cfg.eta0)
    if -bound <= chart.eta_min:
        p.append(f"initial.eta0: amplitude bound {bound:g} reaches alpha(Omega)+kappa = "
                 f"{chart.eta_min:g}")
    if cfg.fluid_enabled and cfg.kind == "flat":
        smax = float(np.max(chart.sigma(np.linspace(chart.s_lo, chart.s_hi, 201), 1)))
        if bound * smax >= 1.0:
            p.append(f"initial.eta0: amplitude bound {bound:g} makes the ALE Jacobian "
                     f"nonpositive (needs < {1 / smax:g} for kappa = {cfg.kappa:g})")
    if cfg.u0 == "lifted" and not cfg.fluid_enabled:
        p.append("initial.u0: 'lifted' needs the fluid to be enabled")
    return p


def parse_config(text, source="<config>"):
    """Parse and validate JSON text into a :class:`SimConfig`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: {exc.msg} (line {exc.lineno}, column {exc.colno})",
                         line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{source}: top level must be an object", line=1)
    problems = []
    kw = {}
    for sec, keys in _SECTIONS.items():
        block = raw.get(sec, {})
        if not isinstance(block, dict):
            problems.append(f"{sec}: expected an object")
            continue
        for key in block:
            if key not in keys:
                problems.append(f"{sec}.{key}: unknown key")
        for key, attr in keys.items():
            if key not in block:
                continue
            val = block[key]
            if sec == "grid" and key == "n_omega":
                if isinstance(val, list) and len(val) == 2:
                    kw["n1"], kw["n2"] = val
                else:
                    kw["n1"] = kw["n2"] = val
            elif key in ("eta0", "eta1"):
                kw[attr] = _mode_list(f"initial.{key}", val, problems)
            elif key == "u0":
                kw[attr] = _u0_spec(val, problems)
            else:
                kw[attr] = val
    for key, attr in _TOP.items():
        if key in raw:
            kw[attr] = raw[key]
    for key in raw:
        if key not in _SECTIONS and key not in _TOP:
            problems.append(f"{key}: unknown key")
    types = {f.name: f.type for f in fields(SimConfig)}
    for k, v in list(kw.items()):
        t = types[k]
        if t in ("float", "float | None") and isinstance(v, (int, float)) and not isinstance(v, bool):
            kw[k] = float(v)
        elif t in ("float", "float | None") and v is not None:
            problems.append(f"{k}: expected a number")
        elif t == "int" and (isinstance(v, bool) or not isinstance(v, int)):
            problems.append(f"{k}: expected an integer")
        elif t == "bool" and not isinstance(v, bool):
            problems.append(f"{k}: expected true/false")
        elif t == "str" and not isinstance(v, str):
            problems.append(f"{k}: expected a string")
    if problems:
        raise ValidationError(problems)
    cfg = SimConfig(**kw)
    problems = validate_config(cfg)
    if problems:
        raise ValidationError(problems)
    return cfg


def load_config(path, use_env=True):
    """Read, parse and validate a JSON configuration file.

    ``FSI_OUTPUT_DIR`` overrides the output directory unless ``use_env`` is false.

    Raises
    ------
    ParseError
        Malformed JSON (with the offending line).
    ValidationError
        Every violated invariant, listed.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cfg = parse_config(text, os.fspath(path))
    env = os.environ.get("FSI_OUTPUT_DIR") if use_env else None
    if env:
        cfg.output_dir = env
    return cfg


def config_to_dict(cfg):
    d = asdict(cfg)
    return {
        "geometry": ({"kind": "flat", "depth": d["depth"]} if cfg.kind == "flat" else
                     {"kind": "cylinder", "radius": d["radius"], "length": d["length"]}),
        "grid": {"n_omega": [d["n1"], d["n2"]], "n_depth": d["n_depth"]},
        "time": {"dt": d["dt"], "t_end": d["t_end"]},
        "shell": {k: d[k] for k in ("thickness", "lame_lambda", "lame_mu", "reg_eps")},
        "fluid": {"viscosity": d["viscosity"], "enabled": d["fluid_enabled"]},
        "kappa": d["kappa"],
        "initial": {"eta0": d["eta0"], "eta1": d["eta1"], "u0": d["u0"]},
        "tolerances": {k: d[k] for k in ("newton_tol", "lin_tol", "gamma_min")},
        "output": {"ledger_stride": d["ledger_stride"], "snapshot_stride": d["snapshot_stride"],
                   "directory": d["output_dir"]},
        "seed": d["seed"],
        "linear_solver": d["linear_solver"],
    }


def dump_config(cfg):
    """Serialise to JSON text that :func:`parse_config` maps back to ``cfg``."""
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)
