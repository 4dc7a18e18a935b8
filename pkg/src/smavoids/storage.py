"""Text persistence of trajectories.

Layout of an output directory::

    scenario.yaml          the scenario with the configuration actually run
    run.yaml               stride, snapshot count, completion status
    timeseries.csv         one row per accepted step
    snapshots/snapshot_NNNNN.csv
    failed_step.yaml       only when the run aborted

Every number is written with 17 significant digits, so a reload recovers the
binary64 values exactly.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np
import yaml

from .scenario import ScenarioError, load_scenario, serialize_scenario
from .solver import StateSnapshot, StepReport, Trajectory

__all__ = [
    "TIMESERIES_COLUMNS",
    "SNAPSHOT_COLUMNS",
    "TrajectoryIOError",
    "format_number",
    "snapshot_text",
    "parse_snapshot",
    "write_trajectory",
    "read_trajectory",
    "write_table",
    "write_failed_report",
]

TIMESERIES_COLUMNS = (
    "t",
    "dt",
    "fp_iterations",
    "fp_residual",
    "lyapunov",
    "dissipation",
    "work",
    "ledger_balance",
    "constraint_residual",
    "mass_residual",
    "max_abs_w",
    "probe_x",
    "probe_u",
    "probe_w",
    "probe_theta",
    "probe_beta1",
    "probe_beta2",
    "probe_beta3",
)

SNAPSHOT_COLUMNS = ("x", "u", "w", "theta", "beta1", "beta2", "beta3", "p")


class TrajectoryIOError(OSError):
    pass


def format_number(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    return "%.17g" % v


def _line(values) -> str:
    return ",".join(format_number(v) for v in values) + "\n"


def write_table(path, columns, rows) -> Path:
    """Write a header line and numeric rows."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(columns) + "\n")
            for r in rows:
                fh.write(_line(r))
    except OSError as exc:
        raise TrajectoryIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def snapshot_text(snap: StateSnapshot, x: np.ndarray, epsilon: float) -> str:
    """Snapshot as CSV text.  Element pressure sits on the row of its left node; the last row holds NaN."""
    theta = snap.theta(epsilon)
    p = np.append(snap.p, np.nan)
    out = [f"# t={format_number(snap.t)}\n", ",".join(SNAPSHOT_COLUMNS) + "\n"]
    for i in range(x.size):
        out.append(_line((x[i], snap.u[i], snap.w[i], theta[i], *snap.beta[i], p[i])))
    return "".join(out)


def parse_snapshot(text: str) -> tuple[StateSnapshot, np.ndarray, np.ndarray]:
    """Inverse of :func:`snapshot_text`; returns the snapshot, node coordinates and stored theta."""
    lines = text.splitlines()
    if len(lines) < 3 or not lines[0].startswith("# t="):
        raise ValueError("not a snapshot file: missing '# t=' line")
    if tuple(lines[1].split(",")) != SNAPSHOT_COLUMNS:
        raise ValueError(f"unexpected snapshot header {lines[1]!r}")
    t = float(lines[0][4:])
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
    snap = StateSnapshot(t, data[:, 1].copy(), data[:, 2].copy(), data[:, 4:7].copy(), data[:-1, 7].copy())
    return snap, data[:, 0].copy(), data[:, 3].copy()


def _timeseries_rows(traj: Trajectory, x: np.ndarray, probe: int):
    eps = traj.cfg.epsilon
    for snap, rep in zip(traj.snapshots[1:], traj.reports):
        led = rep.energy_audit
        theta = snap.theta(eps)
        yield (
            rep.t,
            rep.dt,
            rep.fp_iterations,
            rep.fp_final_residual,
            led.lyapunov if led else np.nan,
            led.dissipation if led else np.nan,
            led.work if led else np.nan,
            led.balance if led else np.nan,
            rep.constraint_residual,
            rep.mass_residual,
            rep.max_abs_w,
            x[probe],
            snap.u[probe],
            snap.w[probe],
            theta[probe],
            *snap.beta[probe],
        )


def _report_doc(rep: StepReport) -> dict:
    doc = asdict(rep)
    led = rep.energy_audit
    doc["energy_audit"] = None if led is None else {**asdict(led), "balance": led.balance}
    return doc


def write_failed_report(path, traj: Trajectory) -> Path | None:
    """Dump the report of the step that aborted the run, if any."""
    if traj.completed:
        return None
    doc = {"failure": traj.failure}
    if traj.failed_report is not None:
        doc["report"] = _report_doc(traj.failed_report)
    path = Path(path)
    try:
        path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
    except OSError as exc:
        raise TrajectoryIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def snapshot_indices(n_snapshots: int, stride: int) -> list[int]:
    """Indices kept for a stride; the final snapshot is always kept."""
    idx = list(range(0, n_snapshots, stride))
    if idx[-1] != n_snapshots - 1:
        idx.append(n_snapshots - 1)
    return idx


def write_trajectory(traj: Trajectory, path, stride: int = 1) -> list[Path]:
    """Write ``traj`` into directory ``path`` and return the files created."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    root = Path(path)
    snapdir = root / "snapshots"
    try:
        snapdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise TrajectoryIOError(f"cannot create {snapdir}: {exc.strerror or exc}") from exc

    scen = traj.scenario
    mesh = scen.mesh()
    x = mesh.nodes
    written = []

    def put(p: Path, text: str):
        try:
            p.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise TrajectoryIOError(f"cannot write {p}: {exc.strerror or exc}") from exc
        written.append(p)

    put(root / "scenario.yaml", serialize_scenario(scen.with_cfg(**asdict(traj.cfg))))
    idx = snapshot_indices(len(traj.snapshots), stride)
    meta = {
        "stride": stride,
        "n_snapshots_total": len(traj.snapshots),
        "snapshot_indices": idx,
        "completed": traj.completed,
        "failure": traj.failure,
    }
    put(root / "run.yaml", yaml.safe_dump(meta, sort_keys=False))
    written.append(write_table(root / "timeseries.csv", TIMESERIES_COLUMNS, _timeseries_rows(traj, x, scen.probe_node)))
    for i in idx:
        put(snapdir / f"snapshot_{i:05d}.csv", snapshot_text(traj.snapshots[i], x, traj.cfg.epsilon))
    failed = write_failed_report(root / "failed_step.yaml", traj)
    if failed:
        written.append(failed)
    return written


def read_trajectory(path) -> tuple[Trajectory, dict]:
    """Reload a trajectory directory.  Reports are not restored; snapshots and scenario are exact."""
    root = Path(path)
    if not root.is_dir():
        raise TrajectoryIOError(f"{root}: not a trajectory directory")
    try:
        scen = load_scenario(root / "scenario.yaml")
        meta = yaml.safe_load((root / "run.yaml").read_text(encoding="utf-8"))
        snaps = []
        for i in meta["snapshot_indices"]:
            p = root / "snapshots" / f"snapshot_{i:05d}.csv"
            snaps.append(parse_snapshot(p.read_text(encoding="utf-8"))[0])
    except FileNotFoundError as exc:
        raise TrajectoryIOError(f"{exc.filename}: missing from trajectory directory") from exc
    except ScenarioError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise TrajectoryIOError(f"{root}: unreadable trajectory ({exc})") from exc
    traj = Trajectory(scen, scen.cfg, snaps, failure=meta.get("failure"))
    return traj, meta


def default_output_dir(fallback: str) -> Path:
    """Output root, overridable through ``SMAVOIDS_OUTPUT_DIR``."""
    return Path(os.environ.get("SMAVOIDS_OUTPUT_DIR", ".")) / fallback
