"""Time stepping of the regularized (Yosida + pressure penalty) system.

Each step solves, by backward Euler in time and P1 elements in space,

* entropy:   C_bar M_L (w - w_n)/dt + latent M_L (b3 - b3_n)/dt + lam B w = r
* momentum:  A u - H (p + Q) = F,   Pi0 sum(b)_t + div u_t = -eps p
* phases:    (c M + ups B)(b - b_n)/dt + k B b + M_L alpha_eps(b) = G(u, w, p)

coupled through a staged fixed-point map on the phase fractions
(entropy -> momentum -> phases).  ``theta = gamma_eps(w)`` is never stored;
it is positive by construction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .constitutive import MaterialParams
from .convex import dist_C, gamma_eps, project_C, tau_of_theta
from .discretization import (
    Mesh1D,
    assemble,
    element_average,
    element_to_nodes,
    gradient_matrix,
    lumped_mass,
)

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "StateSnapshot",
    "StepReport",
    "Loads",
    "Operators",
    "Trajectory",
    "SolverError",
    "PhaseSolveError",
    "StepFailure",
    "solve_entropy",
    "solve_momentum",
    "phase_load",
    "solve_phase_system",
    "solve_phase",
    "fixed_point_step",
    "run_simulation",
]


class SolverError(RuntimeError):
    pass


class PhaseSolveError(SolverError):
    pass


class StepFailure(SolverError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    epsilon: float
    fp_tol: float = 1e-10
    fp_max_iter: int = 50
    picard_relaxation: float = 0.7
    inner_max_iter: int = 5000
    max_halvings: int = 4

    def validate(self) -> list[str]:
        errs = []
        if not self.dt > 0:
            errs.append("dt must be positive")
        if not self.t_end > 0:
            errs.append("t_end must be positive")
        if not self.epsilon > 0:
            errs.append("epsilon must be positive")
        if not self.fp_tol > 0:
            errs.append("fp_tol must be positive")
        if int(self.fp_max_iter) != self.fp_max_iter or self.fp_max_iter < 1:
            errs.append("fp_max_iter must be an integer >= 1")
        if not 0 < self.picard_relaxation <= 1:
            errs.append("picard_relaxation must lie in (0, 1]")
        if int(self.max_halvings) != self.max_halvings or self.max_halvings < 0:
            errs.append("max_halvings must be a nonnegative integer")
        return errs

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass
class StateSnapshot:
    t: float
    u: np.ndarray
    w: np.ndarray
    beta: np.ndarray  # (n_nodes, 3)
    p: np.ndarray  # (n_elements,)

    def theta(self, epsilon: float) -> np.ndarray:
        return gamma_eps(self.w, epsilon)

    def copy(self) -> "StateSnapshot":
        return StateSnapshot(self.t, self.u.copy(), self.w.copy(), self.beta.copy(), self.p.copy())

    def equals(self, other: "StateSnapshot") -> bool:
        return (
            self.t == other.t
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.w, other.w)
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.p, other.p)
        )


@dataclass(frozen=True)
class Loads:
    """Spatially uniform source values at one instant."""

    f: float = 0.0
    g: float = 0.0
    R: float = 0.0
    Pi_left: float = 0.0
    Pi_right: float = 0.0


@dataclass
class StepReport:
    t: float
    dt: float
    fp_iterations: int
    fp_final_residual: float
    fp_residuals: list[float]
    inner_iterations: int
    constraint_residual: float
    mass_residual: float
    max_abs_w: float
    energy_audit: object = None  # diagnostics.StepLedger
    halvings: int = 0
    converged: bool = True


class Operators:
    """Assembled operators for one mesh and material, with factorizations cached per dt."""

    def __init__(self, mesh: Mesh1D, material: MaterialParams):
        if not material.c_visc > 0:
            raise ValueError("c_visc must be positive for the phase system to be well posed")
        if not material.C_bar > 0:
            raise ValueError("C_bar must be positive for the entropy equation to be well posed")
        self.mesh = mesh
        self.material = material
        self.M = assemble("M_mass", mesh, material).matrix
        self.B = assemble("B_laplace", mesh, material).matrix
        self.A = assemble("A_elastic", mesh, material).matrix
        self.H = assemble("H_div", mesh, material).matrix
        self.D = gradient_matrix(mesh)
        self.ML = lumped_mass(mesh)
        self.h = mesh.h
        self.free = mesh.free_nodes
        self._Md = self.M.toarray()
        self._Bd = self.B.toarray()
        self._Kp = (self.D.T @ (self.h[:, None] * self.D.toarray())).astype(float)
        self._cache: dict = {}

    def grad_form(self, x, coef=1.0):
        """``coef * int x' v'`` through the factored form, exactly zero on constants."""
        h = self.h[:, None] if x.ndim == 2 else self.h
        return coef * (self.D.T @ (h * (self.D @ x)))

    def entropy_factor(self, dt):
        key = ("entropy", dt)
        if key not in self._cache:
            m = self.material
            S = np.diag(m.C_bar * self.ML / dt) + m.lam * self._Bd
            self._cache[key] = (S, sla.cho_factor(S))
        return self._cache[key]

    def phase_factor(self, dt):
        key = ("phase", dt)
        if key not in self._cache:
            m = self.material
            V = m.c_visc * self._Md + m.upsilon * self._Bd
            S = V / dt + m.k_grad * self._Bd
            self._cache[key] = (V, S, sla.cho_factor(S))
        return self._cache[key]

    def momentum_factor(self, dt, eps):
        key = ("momentum", dt, eps)
        if key not in self._cache:
            f = self.free
            S = self.A.toarray() + self._Kp / (eps * dt)
            Sf = S[np.ix_(f, f)]
            self._cache[key] = (S, Sf, sla.cho_factor(Sf))
        return self._cache[key]

    def load_vectors(self, loads: Loads) -> tuple[np.ndarray, np.ndarray]:
        """Momentum load F and entropy load r for uniform sources."""
        ones = np.ones(self.mesh.n_nodes)
        F = self.M @ (loads.f * ones)
        F[list(self.mesh.gamma1_nodes)] += loads.g
        r = self.M @ (loads.R * ones)
        r[0] += self.material.lam * loads.Pi_left
        r[-1] += self.material.lam * loads.Pi_right
        return F, r


def _check_residual(S, x, b, what, extra=""):
    nb = np.linalg.norm(b)
    res = np.linalg.norm(S @ x - b)
    if not np.all(np.isfinite(x)) or res > 1e-10 * max(nb, np.linalg.norm(S @ x), 1e-300) and res > 1e-13:
        raise SolverError(f"{what}: linear solve residual {res:.3e} exceeds tolerance{extra}")


def solve_entropy(ops: Operators, w_prev: np.ndarray, beta3_rate: np.ndarray, r_load: np.ndarray, dt: float) -> np.ndarray:
    """Implicit Euler step of the entropy balance in w = log(theta)."""
    m = ops.material
    S, fac = ops.entropy_factor(dt)
    rhs = -m.latent * ops.ML * beta3_rate + r_load - ops.grad_form(w_prev, m.lam)
    dw = sla.cho_solve(fac, rhs)
    _check_residual(S, dw, rhs, "entropy")
    return w_prev + dw


def coupling_stress(ops: Operators, beta: np.ndarray, w: np.ndarray, eps: float) -> np.ndarray:
    """Element values of ``(b1 - b2) tau(theta)`` (trapezoidal rule)."""
    tau = tau_of_theta(gamma_eps(w, eps), ops.material)
    return element_average(ops.mesh, (beta[:, 0] - beta[:, 1]) * tau)


def solve_momentum(ops, beta, w, beta_rate_sum, u_prev, F_load, dt, eps):
    """Quasi-static momentum balance with the pressure eliminated through the penalty.

    Returns nodal displacement and element pressure
    ``p = -(Pi0 sum(b)_t + div u_t) / eps``.
    """
    f = ops.free
    S, Sf, fac = ops.momentum_factor(dt, eps)
    s = element_average(ops.mesh, beta_rate_sum)
    Q = coupling_stress(ops, beta, w, eps)
    rhs = F_load + ops.H @ Q - ops.H @ s / eps - ops.grad_form(u_prev, ops.material.K)
    du = np.zeros(ops.mesh.n_nodes)
    du[f] = sla.cho_solve(fac, rhs[f])
    _check_residual(Sf, du[f], rhs[f], "momentum", f" (penalty factor 1/(eps*dt) = {1.0 / (eps * dt):.3e})")
    u = u_prev + du
    u[list(ops.mesh.gamma0_nodes)] = 0.0
    p = -(s + ops.D @ du / dt) / eps
    return u, p


def phase_load(ops: Operators, u, w, p, eps) -> np.ndarray:
    """Assembled driving force ``int G . phi_j`` for the three phase equations."""
    m = ops.material
    theta = gamma_eps(w, eps)
    strain = ops.D @ u
    tw = tau_of_theta(theta, m) * element_to_nodes(ops.mesh, strain)
    P = element_to_nodes(ops.mesh, p)
    th = m.latent * ops.ML * (theta - m.theta_0)
    return np.column_stack([tw + P, -tw + P, th + P])


def solve_phase_system(ops, beta_prev, G, dt, eps, relaxation=0.7, tol=1e-11, max_iter=5000, beta_init=None):
    """Relaxed Picard iteration on the Yosida term of the implicit phase system.

    Every sweep is one SPD solve with the fixed matrix ``(cM + ups B)/dt + kB``.
    Returns the new fractions and the number of sweeps.
    """
    V, S, fac = ops.phase_factor(dt)
    base = G - ops.grad_form(beta_prev, ops.material.k_grad)
    beta = np.array(beta_prev if beta_init is None else beta_init, dtype=float)
    ml = ops.ML[:, None]
    for it in range(1, max_iter + 1):
        alpha = (beta - project_C(beta)) / eps
        target = beta_prev + sla.cho_solve(fac, base - ml * alpha)
        new = beta + relaxation * (target - beta)
        change = np.max(np.abs(new - beta))
        beta = new
        if change <= tol:
            return beta, it
    raise PhaseSolveError(
        f"phase Picard iteration did not converge in {max_iter} sweeps "
        f"(last change {change:.3e}); dt too large relative to epsilon, dt/eps = {dt / eps:.3g}"
    )


def solve_phase(ops, u, w, p, beta_prev, dt, eps, relaxation=0.7, tol=1e-11, max_iter=5000, beta_init=None):
    G = phase_load(ops, u, w, p, eps)
    return solve_phase_system(ops, beta_prev, G, dt, eps, relaxation, tol, max_iter, beta_init)


def mass_balance_residual(ops, prev: StateSnapshot, new: StateSnapshot, dt, eps) -> float:
    s = element_average(ops.mesh, new.beta.sum(axis=1) - prev.beta.sum(axis=1)) / dt
    r = s + ops.D @ (new.u - prev.u) / dt + eps * new.p
    return float(np.sqrt(np.sum(ops.h * r * r)))


def fixed_point_step(ops: Operators, prev: StateSnapshot, loads: Loads, cfg: SolverConfig, dt: float | None = None):
    """Advance one step with the staged fixed-point map entropy -> momentum -> phases.

    Raises :class:`StepFailure` when ``fp_max_iter`` sweeps do not reach ``fp_tol``.
    """
    from .energy import step_ledger

    dt = cfg.dt if dt is None else dt
    eps = cfg.epsilon
    F, r = ops.load_vectors(loads)
    inner_tol = 0.1 * cfg.fp_tol

    def stage_uw(beta_bar):
        rate = (beta_bar - prev.beta) / dt
        w = solve_entropy(ops, prev.w, rate[:, 2], r, dt)
        u, p = solve_momentum(ops, beta_bar, w, rate.sum(axis=1), prev.u, F, dt, eps)
        return w, u, p

    beta_bar = prev.beta.copy()
    residuals = []
    inner = 0
    converged = False
    for _ in range(cfg.fp_max_iter):
        w, u, p = stage_uw(beta_bar)
        beta_new, n_in = solve_phase(
            ops, u, w, p, prev.beta, dt, eps, cfg.picard_relaxation, inner_tol, cfg.inner_max_iter, beta_init=beta_bar
        )
        inner += n_in
        res = float(np.max(np.abs(beta_new - beta_bar)))
        residuals.append(res)
        beta_bar = beta_new
        if res <= cfg.fp_tol:
            converged = True
            break

    # consistency pass: entropy and momentum with the converged fractions
    w, u, p = stage_uw(beta_bar)
    new = StateSnapshot(prev.t + dt, u, w, beta_bar, p)
    report = StepReport(
        t=new.t,
        dt=dt,
        fp_iterations=len(residuals),
        fp_final_residual=residuals[-1],
        fp_residuals=residuals,
        inner_iterations=inner,
        constraint_residual=float(np.max(dist_C(beta_bar))),
        mass_residual=mass_balance_residual(ops, prev, new, dt, eps),
        max_abs_w=float(np.max(np.abs(w))),
        converged=converged,
    )
    if not converged:
        raise StepFailure(
            f"fixed point did not converge in {cfg.fp_max_iter} iterations at t = {new.t:.6g} "
            f"(residual {residuals[-1]:.3e} > {cfg.fp_tol:.1e})",
            report,
        )
    report.energy_audit = step_ledger(ops, prev, new, F, r, dt, eps)
    return new, report


@dataclass
class Trajectory:
    scenario: object
    cfg: SolverConfig
    snapshots: list[StateSnapshot] = field(default_factory=list)
    reports: list[StepReport] = field(default_factory=list)
    failure: str | None = None
    failed_report: StepReport | None = None

    @property
    def completed(self) -> bool:
        return self.failure is None


def _advance(ops, state, t_next, scenario, cfg, dt, depth):
    """Reach ``t_next`` from ``state``, halving dt on fixed-point failure."""
    try:
        new, rep = fixed_point_step(ops, state, scenario.loads_at(t_next), cfg, dt)
        new.t = t_next
        rep.t = t_next
        rep.halvings = depth
        return [(new, rep)]
    except (StepFailure, PhaseSolveError) as exc:
        if depth >= cfg.max_halvings:
            raise
        log.info("step to t=%.6g failed (%s); halving dt to %.3g", t_next, exc, dt / 2)
        t_mid = state.t + dt / 2
        first = _advance(ops, state, t_mid, scenario, cfg, dt / 2, depth + 1)
        second = _advance(ops, first[-1][0], t_next, scenario, cfg, dt / 2, depth + 1)
        return first + second


def run_simulation(scenario, cfg: SolverConfig | None = None, initial: StateSnapshot | None = None,
                   ops: Operators | None = None) -> Trajectory:
    """Integrate ``scenario`` to ``t_end``.

    ``scenario`` must provide ``mesh()``, ``material``, ``initial_state(mesh)``
    and ``loads_at(t)``.  Unrecoverable step failures end the run early; the
    trajectory keeps everything accepted so far and records the failure.
    """
    cfg = cfg or scenario.cfg
    errs = cfg.validate()
    if errs:
        raise ValueError("; ".join(errs))
    ops = ops or Operators(scenario.mesh(), scenario.material)
    state = initial.copy() if initial is not None else scenario.initial_state(ops.mesh)
    traj = Trajectory(scenario, cfg, [state])
    for n in range(1, cfg.n_steps + 1):
        t_next = n * cfg.dt
        try:
            steps = _advance(ops, state, t_next, scenario, cfg, t_next - state.t, 0)
        except (StepFailure, PhaseSolveError) as exc:
            traj.failure = str(exc)
            traj.failed_report = getattr(exc, "report", None)
            log.error("aborting at t=%.6g: %s", t_next, exc)
            break
        for snap, rep in steps:
            if not np.all(snap.theta(cfg.epsilon) > 0):
                raise SolverError(f"nonpositive temperature at t = {snap.t}")
            traj.snapshots.append(snap)
            traj.reports.append(rep)
        state = steps[-1][0]
    return traj


def with_epsilon(cfg: SolverConfig, epsilon: float, dt: float | None = None) -> SolverConfig:
    return replace(cfg, epsilon=epsilon, dt=cfg.dt if dt is None else dt)
