"""Executable stability checks: energy audit, epsilon sweeps, continuous dependence."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .convex import dist_C
from .discretization import element_average
from .energy import StepLedger, lyapunov, step_ledger
from .solver import Operators, SolverError, Trajectory, run_simulation

__all__ = [
    "EnergyLedger",
    "energy_audit",
    "SweepResult",
    "SweepError",
    "epsilon_sweep",
    "fitted_order",
    "trajectory_norms",
    "DependenceRow",
    "continuous_dependence_experiment",
]


@dataclass
class EnergyLedger:
    """Per-snapshot ledger series; index 0 is the initial state."""

    t: np.ndarray
    lyapunov: np.ndarray
    dissipation: np.ndarray  # cumulative
    work: np.ndarray  # cumulative
    steps: list[StepLedger]
    rel_tol: float = 1e-8

    @property
    def balance(self) -> np.ndarray:
        """``L + cumulative dissipation - cumulative work``; nonincreasing for a valid run."""
        return self.lyapunov + self.dissipation - self.work

    @property
    def violations(self) -> list[int]:
        return [n + 1 for n, s in enumerate(self.steps) if s.violates(self.rel_tol)]

    @property
    def worst_relative_violation(self) -> float:
        if not self.steps:
            return 0.0
        return max(s.balance / (1.0 + abs(s.lyapunov_prev)) for s in self.steps)


def energy_audit(traj: Trajectory, ops: Operators | None = None, rel_tol: float = 1e-8) -> EnergyLedger:
    """Recompute every ledger term from the stored snapshots.

    Needs every accepted step in the trajectory (no striding).  Violations
    are reported through :attr:`EnergyLedger.violations`, never raised.
    """
    scen = traj.scenario
    ops = ops or Operators(scen.mesh(), scen.material)
    eps = traj.cfg.epsilon
    snaps = traj.snapshots
    steps = []
    for prev, new in zip(snaps, snaps[1:]):
        F, r = ops.load_vectors(scen.loads_at(new.t))
        steps.append(step_ledger(ops, prev, new, F, r, new.t - prev.t, eps))
    L = np.array([lyapunov(ops, snaps[0], eps)] + [s.lyapunov for s in steps])
    D = np.concatenate([[0.0], np.cumsum([s.dissipation for s in steps])])
    W = np.concatenate([[0.0], np.cumsum([s.work for s in steps])])
    return EnergyLedger(np.array([s.t for s in snaps]), L, D, W, steps, rel_tol)


def trajectory_norms(traj: Trajectory, ops: Operators | None = None) -> dict:
    """Constraint residual, mass residual ``||sum(b)_t + div u_t||_{L2(Q)}``, ``||p||_{L2(Q)}``, ``max|w|``."""
    scen = traj.scenario
    ops = ops or Operators(scen.mesh(), scen.material)
    snaps = traj.snapshots
    mass = 0.0
    pres = 0.0
    for prev, new in zip(snaps, snaps[1:]):
        dt = new.t - prev.t
        s = element_average(ops.mesh, new.beta.sum(axis=1) - prev.beta.sum(axis=1)) / dt
        div_ut = ops.D @ (new.u - prev.u) / dt
        mass += dt * np.sum(ops.h * (s + div_ut) ** 2)
        pres += dt * np.sum(ops.h * new.p**2)
    return {
        "constraint_residual": float(max(np.max(dist_C(s.beta)) for s in snaps)),
        "mass_residual": float(np.sqrt(mass)),
        "pressure_norm": float(np.sqrt(pres)),
        "max_abs_w": float(max(np.max(np.abs(s.w)) for s in snaps)),
    }


def fitted_order(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``; NaN if any value is not positive."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.any(x <= 0) or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class SweepResult:
    epsilons: list[float]
    dts: list[float]
    constraint_residuals: list[float]
    mass_residuals: list[float]
    pressure_norms: list[float]
    max_abs_w: list[float]
    fitted_orders: dict[str, float]
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)
    failure: str | None = None

    @property
    def pressure_spread(self) -> float:
        p = np.asarray(self.pressure_norms)
        return float(p.max() / p.min()) if p.size and p.min() > 0 else float("nan")


class SweepError(SolverError):
    def __init__(self, message, partial: SweepResult):
        super().__init__(message)
        self.partial = partial


def _run(args):
    scen, cfg = args
    return run_simulation(scen, cfg)


def _map(fn, items, workers):
    if workers is None:
        workers = min(len(items), os.cpu_count() or 1)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def check_sweep_epsilons(epsilons) -> None:
    eps = sorted(float(e) for e in epsilons)
    if len(eps) < 3 or any(e <= 0 for e in eps) or eps[-1] / eps[0] < 100 * (1 - 1e-12):
        raise ValueError("at least 3 values spanning 2 decades required")


def epsilon_sweep(base_scenario, epsilons, dt_base: float | None = None, workers: int | None = 1,
                  keep_trajectories: bool = False) -> SweepResult:
    """Run ``base_scenario`` once per epsilon with ``dt = min(dt_base, epsilon / 2)``.

    Orders are least-squares slopes in log-log against epsilon.  A failed run
    aborts the sweep with a :class:`SweepError` carrying the finished runs.
    """
    check_sweep_epsilons(epsilons)
    epsilons = [float(e) for e in epsilons]
    dt_base = base_scenario.cfg.dt if dt_base is None else dt_base
    cfgs = [replace(base_scenario.cfg, epsilon=e, dt=min(dt_base, e / 2)) for e in epsilons]
    trajs = _map(_run, [(base_scenario, c) for c in cfgs], workers)

    res = SweepResult([], [], [], [], [], [], {})
    for e, cfg, tr in zip(epsilons, cfgs, trajs):
        if not tr.completed:
            res.failure = f"epsilon = {e:g}: {tr.failure}"
            break
        nm = trajectory_norms(tr)
        res.epsilons.append(e)
        res.dts.append(cfg.dt)
        res.constraint_residuals.append(nm["constraint_residual"])
        res.mass_residuals.append(nm["mass_residual"])
        res.pressure_norms.append(nm["pressure_norm"])
        res.max_abs_w.append(nm["max_abs_w"])
        if keep_trajectories:
            res.trajectories.append(tr)
    if len(res.epsilons) >= 2:
        res.fitted_orders = {
            "constraint_residual": fitted_order(res.epsilons, res.constraint_residuals),
            "mass_residual": fitted_order(res.epsilons, res.mass_residuals),
        }
    if res.failure:
        raise SweepError(f"epsilon sweep aborted: {res.failure}", res)
    return res


# --- continuous dependence ----------------------------------------------------

@dataclass
class DependenceRow:
    delta: float
    lhs: float
    rhs: float


def _sq(x, Mat):
    return float(x @ (Mat @ x))


def dependence_lhs(ops: Operators, a: Trajectory, b: Trajectory) -> float:
    """Discrete left-hand side of the continuous dependence estimate.

    ``max_t |dw|_M^2 + sum dt |dw|_{M+B}^2 + sum dt (|du|_A^2 + |du_t|_A^2)
    + sum_j sum dt (|db_j|_{M+B}^2 + |db_j,t|_{M+B}^2)``
    """
    M, B, A = ops.M, ops.B, ops.A
    V = M + B
    sa, sb = a.snapshots, b.snapshots
    if len(sa) != len(sb):
        raise ValueError("trajectories must share the time grid")
    linf = max(_sq(x.w - y.w, M) for x, y in zip(sa, sb))
    l2 = 0.0
    for n in range(1, len(sa)):
        dt = sa[n].t - sa[n - 1].t
        dw = sa[n].w - sb[n].w
        du = sa[n].u - sb[n].u
        du_t = (du - (sa[n - 1].u - sb[n - 1].u)) / dt
        db = sa[n].beta - sb[n].beta
        db_t = (db - (sa[n - 1].beta - sb[n - 1].beta)) / dt
        l2 += dt * (_sq(dw, V) + _sq(du, A) + _sq(du_t, A))
        l2 += dt * sum(_sq(db[:, j], V) + _sq(db_t[:, j], V) for j in range(3))
    return linf + l2


def dependence_rhs(ops: Operators, a: Trajectory, b: Trajectory) -> float:
    """Data differences: initial states plus ``|F1 - F2|_{L2(W')}^2 + |R1 - R2|_{L2(V')}^2``."""
    M, B, A = ops.M, ops.B, ops.A
    V = (M + B).toarray()
    f = ops.free
    Af = A.toarray()[np.ix_(f, f)]
    x0, y0 = a.snapshots[0], b.snapshots[0]
    rhs = _sq(x0.w - y0.w, M) + _sq(x0.u - y0.u, A)
    rhs += sum(_sq(x0.beta[:, j] - y0.beta[:, j], M + B) for j in range(3))
    for n in range(1, len(a.snapshots)):
        t = a.snapshots[n].t
        dt = t - a.snapshots[n - 1].t
        Fa, ra = ops.load_vectors(a.scenario.loads_at(t))
        Fb, rb = ops.load_vectors(b.scenario.loads_at(t))
        dF = (Fa - Fb)[f]
        dr = ra - rb
        rhs += dt * (dF @ sla.solve(Af, dF, assume_a="pos") + dr @ sla.solve(V, dr, assume_a="pos"))
    return float(rhs)


def _perturbed(scenario, kind, delta):
    """Scenario and initial state with the chosen datum perturbed by ``delta``."""
    mesh = scenario.mesh()
    state = scenario.initial_state(mesh)
    if kind == "w0":
        x = mesh.nodes
        state.w = state.w + delta * np.cos(np.pi * x / mesh.length)
        return scenario, state
    if kind == "F":
        src = scenario.sources
        return replace(scenario, sources=replace(src, g=src.g.shifted(delta))), state
    raise ValueError(f"unknown perturbation kind {kind!r}; use 'w0' or 'F'")


def _run_pert(args):
    scen, state = args
    return run_simulation(scen, initial=state)


def continuous_dependence_experiment(scenario, deltas, kind: str = "w0", workers: int | None = 1):
    """Compare a baseline run with runs whose data are perturbed by each delta.

    ``kind='w0'`` perturbs the initial log-temperature by ``delta*cos(pi x/L)``;
    ``kind='F'`` adds ``delta`` to the traction series.  Returns the rows and,
    per consecutive pair, ``(lhs ratio, rhs ratio)``.
    """
    deltas = [float(d) for d in deltas]
    jobs = [_perturbed(scenario, kind, 0.0)] + [_perturbed(scenario, kind, d) for d in deltas]
    trajs = _map(_run_pert, jobs, workers)
    for tr in trajs:
        if not tr.completed:
            raise SolverError(f"dependence run failed: {tr.failure}")
    base = trajs[0]
    ops = Operators(scenario.mesh(), scenario.material)
    rows = [DependenceRow(d, dependence_lhs(ops, base, tr), dependence_rhs(ops, base, tr))
            for d, tr in zip(deltas, trajs[1:])]
    ratios = []
    for r1, r2 in zip(rows, rows[1:]):
        lr = r1.lhs / r2.lhs if r2.lhs > 0 else float("nan")
        rr = r1.rhs / r2.rhs if r2.rhs > 0 else float("nan")
        ratios.append((lr, rr))
    return rows, ratios
