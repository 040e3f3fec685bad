"""
Snapshot and table formats plus the commands behind the ``fsi`` executable.

Output directory of a run::

    config.json        validated configuration (reloadable)
    ledger.csv         energy ledger, one row per recorded step
    monitors.csv       W^{1,4} and weighted H^2 monitors with their baselines
    snap_0000000.bin   snapshots (see below)
    outcome.json       how the run ended and its exit code

A snapshot is a 64-byte ASCII header followed by little-endian float64
arrays.  The header reads ``KFSISNAP <version> <n1> <n2> <nz> <step> <time>``
(time as ``float.hex``), space padded and newline terminated.  The arrays are
``eta`` and ``v`` on the shell grid and, when ``nz > 0``, the constraint
displacement ``eta_geom`` followed by ``u1, u2, u3, p`` in MAC layout.
"""
from __future__ import annotations

import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import dump_config, load_config
from .discrete import ScalarField2D
from .errors import DisplacementOutOfRange, IncompatibleData, MissingSnapshots
from .staggered import StaggeredField3D

__all__ = [
    "SNAPSHOT_VERSION",
    "EXIT_CODES",
    "SnapshotRecord",
    "write_snapshot",
    "read_snapshot",
    "snapshot_paths",
    "load_trajectory",
    "cmd_run",
    "cmd_validate",
    "cmd_diagnose",
    "cmd_geometry",
    "DIAGNOSTIC_COLUMNS",
    "MONITOR_COLUMNS",
]

SNAPSHOT_MAGIC = "KFSISNAP"
SNAPSHOT_VERSION = 1
HEADER_BYTES = 64

EXIT_CODES = {"final_time": 0, "config": 2, "solver_failure": 3, "self_intersection": 4,
              "coercivity": 5}

MONITOR_COLUMNS = ("step", "time", "w14", "h2", "w14_baseline", "h2_baseline", "gamma_min",
                   "J_min")
DIAGNOSTIC_COLUMNS = ("run", "reg_eps", "n1", "n_depth", "snapshots", "t_last", "s", "w14",
                      "h2", "nikolskii", "vel_hs", "defect", "grad3", "korn_gap")


@dataclass
class SnapshotRecord:
    """One saved state.  Fluid arrays are ``None`` for shell-only runs."""

    step: int
    time: float
    eta: np.ndarray
    vel: np.ndarray
    eta_geom: np.ndarray = None
    u1: np.ndarray = None
    u2: np.ndarray = None
    u3: np.ndarray = None
    p: np.ndarray = None
    version: int = SNAPSHOT_VERSION

    @property
    def nz(self):
        return 0 if self.u1 is None else self.u1.shape[0]

    @classmethod
    def from_state(cls, step, t, shell, fluid=None):
        rec = cls(int(step), float(t), shell.eta.values.copy(), shell.vel.values.copy())
        if fluid is not None:
            geom = fluid.eta if fluid.eta is not None else shell.eta.values
            u = fluid.u
            rec.eta_geom = np.array(geom, dtype=float)
            rec.u1, rec.u2, rec.u3, rec.p = (u.u1.copy(), u.u2.copy(), u.u3.copy(),
                                              u.p.copy())
        return rec

    def arrays(self):
        out = [self.eta, self.vel]
        if self.nz:
            out += [self.eta_geom, self.u1, self.u2, self.u3, self.p]
        return out


def write_snapshot(path, rec):
    n1, n2 = rec.eta.shape
    header = f"{SNAPSHOT_MAGIC} {rec.version} {n1} {n2} {rec.nz} {rec.step} {float(rec.time).hex()}"
    if len(header) >= HEADER_BYTES:
        raise ValueError("snapshot header does not fit")
    with open(path, "wb") as fh:
        fh.write(header.ljust(HEADER_BYTES - 1).encode("ascii") + b"\n")
        for a in rec.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_snapshot(path):
    """Inverse of :func:`write_snapshot` (bit-exact)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head = blob[:HEADER_BYTES].decode("ascii").split()
    if len(head) != 7 or head[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    version, n1, n2, nz, step = (int(v) for v in head[1:6])
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    t = float.fromhex(head[6])
    data = np.frombuffer(blob, dtype="<f8", offset=HEADER_BYTES)
    shapes = [(n1, n2), (n1, n2)]
    if nz:
        shapes += [(n1, n2), (nz, n1, n2), (nz, n1, n2), (nz + 1, n1, n2), (nz, n1, n2)]
    need = sum(int(np.prod(s)) for s in shapes)
    if data.size != need:
        raise ValueError(f"{path}: expected {need} values, found {data.size}")
    arrs, pos = [], 0
    for s in shapes:
        k = int(np.prod(s))
        arrs.append(data[pos:pos + k].reshape(s).astype(float))
        pos += k
    rec = SnapshotRecord(step, t, arrs[0], arrs[1], version=version)
    if nz:
        rec.eta_geom, rec.u1, rec.u2, rec.u3, rec.p = arrs[2:]
    return rec


def snapshot_paths(directory):
    return sorted(Path(directory).glob("snap_*.bin"))


def _snapshot_name(step):
    return f"snap_{step:07d}.bin"


def load_trajectory(directory):
    """Rebuild a :class:`~koiterfsi.solver.coupling.Trajectory` from a run directory.

    Raises
    ------
    MissingSnapshots
        The directory holds no snapshot files.
    """
    from .solver.coupling import Trajectory, build_problem
    from .solver.fluid import FluidState
    from .solver.structure import ShellState

    paths = snapshot_paths(directory)
    if not paths:
        raise MissingSnapshots(f"no snapshot files in {directory}")
    cfg = load_config(Path(directory) / "config.json", use_env=False)
    pb = build_problem(cfg)
    traj = Trajectory(pb.surface, pb.params, pb.chart)
    for p in paths:
        rec = read_snapshot(p)
        if rec.eta.shape != pb.omega.shape:
            raise ValueError(f"{p}: grid {rec.eta.shape} does not match the configuration")
        shell = ShellState(ScalarField2D(pb.omega, rec.eta), ScalarField2D(pb.omega, rec.vel))
        traj.record_shell(rec.time, shell)
        if rec.nz:
            u = StaggeredField3D(pb.fgrid, rec.u1, rec.u2, rec.u3, rec.p)
            traj.record_fluid(rec.time, FluidState(u, eta=rec.eta_geom), shell)
    return cfg, traj


def _write_rows(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([r[c] if isinstance(r[c], (str, int)) else "%.17e" % r[c]
                        for c in columns])


def _print(out, *args):
    print(*args, file=out)


def cmd_run(cfg, out=None):
    """Run a configuration, write its output directory and return the exit code."""
    from .solver.coupling import build_problem, project_initial_data, time_loop
    from .solver.diagnostics import monitor_baselines, w14_norm, weighted_h2

    out = out or sys.stdout
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(dump_config(cfg), encoding="utf-8")
    for old in snapshot_paths(root):
        old.unlink()
    pb = build_problem(cfg)
    try:
        initial = project_initial_data(cfg, pb)
    except (IncompatibleData, DisplacementOutOfRange) as exc:
        _print(out, f"error: initial data: {exc}")
        return EXIT_CODES["config"]
    shell0, fluid0, report = initial
    monitors = []
    base = {}
    last = {}

    def on_step(n, t, shell, fluid, row):
        if n == 0:
            base.update(monitor_baselines(pb.surface, pb.params, pb.omega, row["total"]))
        if n % cfg.ledger_stride == 0 or n == cfg.steps:
            monitors.append({"step": n, "time": t, "w14": w14_norm(shell.eta),
                             "h2": weighted_h2(pb.surface, shell.eta),
                             "w14_baseline": base["w14"], "h2_baseline": base["h2"],
                             "gamma_min": row["gamma_min"], "J_min": row["J_min"]})
        if n % cfg.snapshot_stride == 0 or n == cfg.steps:
            write_snapshot(root / _snapshot_name(n), SnapshotRecord.from_state(n, t, shell, fluid))
        last.update(step=n, t=t, shell=shell, fluid=fluid)

    traj, ledger, outcome = time_loop(cfg, pb, initial=(shell0, fluid0), on_step=on_step,
                                      record_fluid=10**9)
    if not outcome.ok and last and not (root / _snapshot_name(last["step"])).exists():
        write_snapshot(root / _snapshot_name(last["step"]),
                       SnapshotRecord.from_state(last["step"], last["t"], last["shell"],
                                                 last["fluid"]))
    ledger.write_csv(root / "ledger.csv")
    _write_rows(root / "monitors.csv", MONITOR_COLUMNS, monitors)
    code = EXIT_CODES[outcome.arm]
    (root / "outcome.json").write_text(json.dumps(
        {"arm": outcome.arm, "message": outcome.message, "steps": outcome.steps,
         "time": outcome.time, "exit_code": code}, indent=2) + "\n", encoding="utf-8")
    _print(out, f"{outcome.arm}: {outcome.message} (steps={outcome.steps}, t={outcome.time:.6g})")
    if not outcome.ok:
        m = monitors[-1]
        r = ledger.rows[-1]
        _print(out, "final monitor row: " + " ".join(
            [f"step={m['step']}", f"gamma_min={m['gamma_min']:.6e}", f"J_min={m['J_min']:.6e}",
             f"w14={m['w14']:.6e}", f"h2={m['h2']:.6e}", f"total={r['total']:.6e}"]))
    return code


def cmd_validate(inject=(), out=None):
    """Run the desk-sized property suites; returns 0 when all pass, 1 otherwise."""
    from contextlib import ExitStack

    from . import faults
    from .validation import run_all

    out = out or sys.stdout
    with ExitStack() as stack:
        for name in inject:
            stack.enter_context(faults.inject(name))
            _print(out, f"fault injected: {name}")
        results = run_all(lambda s: _print(out, s))
    failed = [r.name for r in results if not r.passed]
    _print(out, f"{len(results) - len(failed)}/{len(results)} suites passed"
           + (f"; failed: {', '.join(failed)}" if failed else ""))
    return 1 if failed else 0


def cmd_diagnose(directories, s, output=None):
    """Regularity table of one or more run directories, written as CSV.

    Parameters
    ----------
    directories : list of path
        Each must hold snapshots and ``config.json``; one row per directory.
    s : float
        Fractional order in ``(0, 1/2)``.
    output : path, optional
        Defaults to ``<dir>/diagnostics.csv`` for a single directory and
        ``diagnostics.csv`` in the working directory otherwise.

    Returns
    -------
    Path, list of dict
    """
    from .solver.diagnostics import regularity_diagnostics

    if not 0.0 < s < 0.5:
        raise ValueError("order s must lie in (0, 1/2)")
    if isinstance(directories, (str, os.PathLike)):
        directories = [directories]
    rows = []
    for d in directories:
        cfg, traj = load_trajectory(d)
        diag = regularity_diagnostics(traj, s)
        rows.append({"run": Path(d).name, "reg_eps": cfg.reg_eps, "n1": cfg.n1,
                     "n_depth": cfg.n_depth if cfg.fluid_enabled else 0,
                     "snapshots": len(traj.etas), "t_last": traj.times[-1], "s": s,
                     **{k: float(diag[k]) for k in DIAGNOSTIC_COLUMNS[7:]}})
    if output is None:
        output = Path(directories[0]) / "diagnostics.csv" if len(directories) == 1 \
            else Path("diagnostics.csv")
    _write_rows(output, DIAGNOSTIC_COLUMNS, rows)
    return Path(output), rows


def _geometry_samples(n=6, seed=0):
    rng = np.random.default_rng(seed)
    y = (rng.uniform(0, 2 * np.pi, n), rng.uniform(0, 1, n))
    eta = rng.uniform(-0.3, 0.3, n)
    d = 0.5 * rng.standard_normal((5, n))
    return y, eta, d


def cmd_geometry(which, out=None):
    """Tabulate computed ``gamma``, ``G``, ``R`` next to their closed forms."""
    from .geometry import cylinder, flat_channel, gamma, gamma_from_frame, sphere_frame
    from .shell import DisplacementJet, curvature_change, metric_change
    from .validation import cylinder_closed_forms

    out = out or sys.stdout
    if which == "sphere-table":
        R = 1.0
        _print(out, f"{'eta':>8} {'gamma':>22} {'(eta-R)^2/R^2':>22} {'diff':>10}")
        for e in np.linspace(-0.75, 0.75, 7):
            g = float(gamma_from_frame(sphere_frame(R, 0.4, 1.1), e))
            ref = (e - R) ** 2 / R**2
            _print(out, f"{e:8.3f} {g:22.16f} {ref:22.16f} {abs(g - ref):10.1e}")
        return 0
    if which not in ("cylinder", "flat"):
        raise ValueError(f"unknown geometry {which!r}")
    R = 1.0
    surf = cylinder(R) if which == "cylinder" else flat_channel(1.0)
    y, eta, d = _geometry_samples()
    jet = DisplacementJet(eta, d[:2], np.array([[d[2], d[3]], [d[3], d[4]]]))
    g_c = gamma(surf, y, eta)
    G_c = metric_change(surf, jet, y)
    R_c = curvature_change(surf, jet, y)
    if which == "cylinder":
        g_r, G_r, R_r = cylinder_closed_forms(R, eta, d[0], d[1], d[2], d[3], d[4])
    else:
        g_r = np.ones_like(eta)
        G_r = np.array([[d[0] * d[0], d[0] * d[1]], [d[0] * d[1], d[1] * d[1]]])
        R_r = np.array([[d[2], d[3]], [d[3], d[4]]])
    names = ["gamma", "G11", "G12", "G22", "R11", "R12", "R22"]
    comp = [g_c, G_c[0, 0], G_c[0, 1], G_c[1, 1], R_c[0, 0], R_c[0, 1], R_c[1, 1]]
    ref = [g_r, G_r[0, 0], G_r[0, 1], G_r[1, 1], R_r[0, 0], R_r[0, 1], R_r[1, 1]]
    _print(out, f"{'y1':>7} {'y2':>7} {'eta':>8} {'quantity':>8} {'computed':>22} "
           f"{'closed form':>22} {'diff':>9}")
    worst = 0.0
    for i in range(eta.size):
        for nm, c, r in zip(names, comp, ref):
            diff = abs(float(c[i]) - float(r[i]))
            worst = max(worst, diff)
            _print(out, f"{y[0][i]:7.3f} {y[1][i]:7.3f} {eta[i]:8.4f} {nm:>8} "
                   f"{float(c[i]):22.15e} {float(r[i]):22.15e} {diff:9.1e}")
    _print(out, f"max difference {worst:.2e}")
    return 0

