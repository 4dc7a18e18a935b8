"""Independent reference computations and the built-in property suite.

The oracles here share no code path with the production routines they check:
the projection oracle enumerates faces of C through barycentric coordinates,
the sorting oracle uses the classical simplex algorithm, and the ODE oracle
integrates the uniform phase equation with tiny explicit substeps.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .constitutive import LocalState, MaterialParams, entropy_density, free_energy, phase_driving_force, stress
from .convex import delta_eps_prime, gamma_eps, hat_gamma_eps, project_C
from .discretization import assemble, build_mesh
from .solver import Operators, solve_entropy, solve_momentum, solve_phase_system

__all__ = [
    "project_C_faces",
    "project_C_sorting",
    "uniform_phase_ode",
    "gamma_lemma_violations",
    "entropy_mms_error",
    "entropy_orders",
    "bar_solution_error",
    "elastic_mms_error",
    "constitutive_fd_errors",
    "CheckResult",
    "run_checks",
]

_VERTICES = np.vstack([np.zeros(3), np.eye(3)])
_FACES = [f for k in range(1, 5) for f in itertools.combinations(range(4), k)]


def project_C_faces(x) -> np.ndarray:
    """Brute-force projection: best feasible point over the affine hulls of all 15 faces."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    best = np.full(x.shape, np.nan)
    best_d = np.full(x.shape[0], np.inf)
    for face in _FACES:
        V = _VERTICES[list(face)]
        v0 = V[0]
        E = (V[1:] - v0).T  # 3 x (k-1)
        if E.shape[1] == 0:
            y = np.broadcast_to(v0, x.shape)
            ok = np.ones(x.shape[0], bool)
        else:
            lam, *_ = np.linalg.lstsq(E, (x - v0).T, rcond=None)
            y = v0 + (E @ lam).T
            bary = np.vstack([1.0 - lam.sum(axis=0), lam])
            ok = np.all(bary >= -1e-12, axis=0)
        d = np.sum((x - y) ** 2, axis=1)
        take = ok & (d < best_d)
        best[take] = y[take]
        best_d[take] = d[take]
    return best


def project_C_sorting(x) -> np.ndarray:
    """Clip to the orthant; if the sum still exceeds one, project onto the unit simplex by sorting."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.clip(x, 0.0, None)
    over = out.sum(axis=1) > 1.0
    if np.any(over):
        v = x[over]
        u = -np.sort(-v, axis=1)
        css = np.cumsum(u, axis=1) - 1.0
        k = np.arange(1, 4)
        rho = np.max(np.where(u - css / k > 0, k, 0), axis=1)
        shift = css[np.arange(v.shape[0]), rho - 1] / rho
        out[over] = np.clip(v - shift[:, None], 0.0, None)
    return out


def uniform_phase_ode(b0: float, g: float, eps: float, t_end: float, c_visc: float = 1.0,
                      substeps_per_unit: float = 1e6) -> float:
    """Explicit Euler for ``c b' + (b - 1)_+ / eps = g`` (one fraction, others zero)."""
    n = max(1, int(np.ceil(t_end * substeps_per_unit)))
    h = t_end / n
    b = float(b0)
    for _ in range(n):
        b += h * (g - max(b - 1.0, 0.0) / eps) / c_visc
    return b


def gamma_lemma_violations(eps: float, n: int = 200_001) -> tuple[int, int]:
    """Count grid points where ``hat_gamma < gamma`` and where ``s * delta'(s) < 1``.

    The second product is evaluated in floating point, so it may land a few
    ulps below one on the logarithmic branch; a slack of 4 ulps is allowed.
    """
    inv = 1.0 / eps
    r = np.concatenate([np.linspace(-40.0, inv, n // 2), np.linspace(inv, inv + 50.0 * max(1.0, inv), n // 2)])
    v1 = int(np.count_nonzero(hat_gamma_eps(r, eps) < gamma_eps(r, eps)))
    s = np.concatenate([np.geomspace(1e-12, np.exp(inv), n // 2), np.exp(inv) * np.linspace(1.0, 1e3, n // 2)])
    v2 = int(np.count_nonzero(s * delta_eps_prime(s, eps) < 1.0 - 4 * np.finfo(float).eps))
    return v1, v2


# --- manufactured entropy solution: w = cos(pi x) exp(-t), unit coefficients ----

def _mms_exact(x, t):
    return np.cos(np.pi * x) * np.exp(-t)


def entropy_mms_error(n_elements: int, dt: float, t_end: float) -> float:
    """L2 error at ``t_end`` of the implicit entropy solve for the manufactured solution."""
    mesh = build_mesh(1.0, n_elements)
    ops = Operators(mesh, MaterialParams())
    x = mesh.nodes
    w = _mms_exact(x, 0.0)
    zero = np.zeros_like(x)
    steps = int(round(t_end / dt))
    for n in range(1, steps + 1):
        t = n * dt
        r = ops.M @ ((np.pi**2 - 1.0) * _mms_exact(x, t))
        w = solve_entropy(ops, w, zero, r, dt)
    e = w - _mms_exact(x, steps * dt)
    return float(np.sqrt(e @ (ops.M @ e)))


def entropy_orders(spatial=(8, 16, 32, 64, 128), temporal=(0.1, 0.05, 0.025, 0.0125),
                   t_space: float = 0.05, t_time: float = 1.0, n_fine: int = 256):
    """Observed convergence orders.  Spatial runs use ``dt = h^2`` so time error does not pollute them."""
    hs = [1.0 / n for n in spatial]
    es = [entropy_mms_error(n, h * h, t_space) for n, h in zip(spatial, hs)]
    et = [entropy_mms_error(n_fine, dt, t_time) for dt in temporal]
    p_space = float(np.polyfit(np.log(hs), np.log(es), 1)[0])
    p_time = float(np.polyfit(np.log(temporal), np.log(et), 1)[0])
    return p_space, p_time, es, et


def bar_solution_error(n_elements: int = 16, K: float = 2.0, f: float = 0.7, g: float = -1.3) -> dict:
    """Max nodal errors for the clamped bar.

    ``elastic``: ``-K u'' = f``, ``u(0) = 0``, ``K u'(1) = g`` with the exact
    quadratic solution.  ``penalized``: one momentum step from rest with frozen
    fractions above theta_c and no body force, whose exact solution is the
    line ``u = g x / (K + 1/(eps dt))``.
    """
    mat = MaterialParams(K=K)
    mesh = build_mesh(1.0, n_elements)
    x = mesh.nodes
    ops = Operators(mesh, mat)
    A = assemble("A_elastic", mesh, mat).matrix.toarray()
    F = ops.M @ np.full(x.size, f)
    F[-1] += g
    fr = mesh.free_nodes
    u = np.zeros_like(x)
    u[fr] = np.linalg.solve(A[np.ix_(fr, fr)], F[fr])
    exact = -f * x**2 / (2 * K) + (g + f) * x / K
    err_el = float(np.max(np.abs(u - exact)))

    eps, dt = 1e-2, 5e-3
    beta = np.tile([0.3, 0.3, 0.4], (x.size, 1))
    w = np.full(x.size, np.log(2.0 * mat.theta_c))
    Fg = np.zeros_like(x)
    Fg[-1] = g
    up, p = solve_momentum(ops, beta, w, np.zeros_like(x), np.zeros_like(x), Fg, dt, eps)
    exact_p = g * x / (K + 1.0 / (eps * dt))
    err_pen = float(np.max(np.abs(up - exact_p)))
    err_stress = float(np.max(np.abs(K * (ops.D @ up) - p - g)))
    return {"elastic": err_el, "penalized": err_pen, "stress": err_stress}


def elastic_mms_error(n_elements: int) -> float:
    """L2 error of ``-u'' = pi^2 sin(pi x)``, ``u(0) = 0``, ``u'(1) = -pi`` (exact ``u = sin(pi x)``)."""
    mesh = build_mesh(1.0, n_elements)
    x = mesh.nodes
    A = assemble("A_elastic", mesh, MaterialParams()).matrix.toarray()
    M = assemble("M_mass", mesh).matrix
    F = M @ (np.pi**2 * np.sin(np.pi * x))
    F[-1] += -np.pi
    fr = mesh.free_nodes
    u = np.zeros_like(x)
    u[fr] = np.linalg.solve(A[np.ix_(fr, fr)], F[fr])
    e = u - np.sin(np.pi * x)
    return float(np.sqrt(e @ (M @ e)))


def uniform_phase_step_error(eps: float = 0.01, dt: float = 0.01, steps: int = 20) -> tuple[float, float]:
    """Backward Euler phase steps against the fine ODE oracle for ``b = (0.98, 0, 0)``, ``g = (1, 0, 0)``.

    Returns the final discrete value and its distance to the oracle.
    """
    mesh = build_mesh(1.0, 4)
    ops = Operators(mesh, MaterialParams())
    beta = np.tile([0.98, 0.0, 0.0], (mesh.n_nodes, 1))
    G = ops.ML[:, None] * np.array([1.0, 0.0, 0.0])
    for _ in range(steps):
        beta, _ = solve_phase_system(ops, beta, G, dt, eps, tol=1e-13)
    ref = uniform_phase_ode(0.98, 1.0, eps, steps * dt)
    return float(beta[0, 0]), float(abs(beta[0, 0] - ref))


def _random_states(rng, n, m: MaterialParams, on_face: bool):
    # fractions strictly inside C (or on the face sum = 1), temperatures away from the kink at theta_c
    raw = rng.dirichlet(np.ones(4), size=n)
    beta = (1 - 1e-12) * raw[:, :3] / raw[:, :3].sum(axis=1, keepdims=True) if on_face else 0.05 + 0.8 * raw[:, :3]
    theta = rng.uniform(0.2, 3.0, size=n)
    near = np.abs(theta - m.theta_c) < 1e-3
    theta[near] += 2e-3
    strain = rng.uniform(-1.0, 1.0, size=n)
    grad = rng.normal(size=(n, 3))
    return beta, theta, strain, grad


def constitutive_fd_errors(n_states: int = 1000, seed: int = 7, m: MaterialParams | None = None) -> dict:
    """Largest relative gaps between constitutive outputs and central differences of the free energy.

    Errors are ``|fd - value| / max(|value|, 1)``.  The stress check uses
    states with ``sum(beta) = 1``, where the mechanical term reduces to
    ``K strain``.  The phase force is compared after removing the component
    along ``(1, 1, 1)``; ``normal_offset`` is the gap between that component
    and ``K strain^2 / 2``.
    """
    m = m or MaterialParams()
    rng = np.random.default_rng(seed)
    beta, theta, strain, grad = _random_states(rng, n_states, m, on_face=False)
    st = LocalState(strain, beta, theta, grad)

    def rel(fd, val):
        return float(np.max(np.abs(fd - val) / np.maximum(np.abs(val), 1.0)))

    h = 1e-6 * theta
    up = free_energy(LocalState(strain, beta, theta + h, grad), m)
    dn = free_energy(LocalState(strain, beta, theta - h, grad), m)
    err_s = rel(-(up - dn) / (2 * h), entropy_density(st, m))

    hb = 1e-6
    grad_b = np.empty_like(beta)
    for j in range(3):
        e = np.zeros(3)
        e[j] = hb
        grad_b[:, j] = (free_energy(LocalState(strain, beta + e, theta, grad), m)
                        - free_energy(LocalState(strain, beta - e, theta, grad), m)) / (2 * hb)
    G = phase_driving_force(st, m)
    n = np.ones(3) / np.sqrt(3.0)
    tang = lambda v: v - np.outer(v @ n, n)  # noqa: E731
    err_g = rel(tang(-grad_b), tang(G))
    offset = (G - (-grad_b)) @ np.ones(3) / 3.0
    err_n = float(np.max(np.abs(offset - 0.5 * m.K * strain**2)))

    bf, tf, sf, gf = _random_states(rng, n_states, m, on_face=True)
    he = 1e-6
    fd = (free_energy(LocalState(sf + he, bf, tf, gf), m) - free_energy(LocalState(sf - he, bf, tf, gf), m)) / (2 * he)
    err_sig = rel(fd, stress(LocalState(sf, bf, tf, gf), m))
    return {"entropy": err_s, "phase_tangential": err_g, "phase_normal_offset": err_n, "stress": err_sig}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _timed(name, fn):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crashing check is a failed check
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


def _check_projection():
    rng = np.random.default_rng(20240611)
    x = rng.uniform(-2.0, 3.0, size=(2000, 3))
    err = np.max(np.abs(project_C(x) - project_C_faces(x)))
    err2 = np.max(np.abs(project_C(x) - project_C_sorting(x)))
    return max(err, err2) <= 1e-8, f"max deviation {max(err, err2):.2e} on 2000 points"


def _check_gamma():
    counts = {e: gamma_lemma_violations(e, 20_001) for e in (1.0, 0.1, 0.01)}
    total = sum(a + b for a, b in counts.values())
    return total == 0, f"{total} violations over epsilon in {{1, 0.1, 0.01}}"


def _check_entropy_mms():
    ps, pt, _, _ = entropy_orders(spatial=(8, 16, 32, 64), temporal=(0.1, 0.05, 0.025), n_fine=128)
    return ps >= 1.8 and pt >= 0.9, f"spatial order {ps:.3f}, temporal order {pt:.3f}"


def _check_bar():
    e = bar_solution_error()
    worst = max(e.values())
    return worst <= 1e-10, f"max nodal error {worst:.2e}"


def _check_phase_ode():
    val, err = uniform_phase_step_error()
    return abs(val - 1.01) < 2e-3 and err < 2e-3, f"b1 = {val:.6f}, oracle gap {err:.2e}"


def _check_constitutive():
    e = constitutive_fd_errors(200)
    return max(e.values()) <= 1e-5, ", ".join(f"{k} {v:.1e}" for k, v in e.items())


CHECKS = {
    "free energy derivatives": _check_constitutive,
    "projection matches face-enumeration and sorting oracles": _check_projection,
    "gamma family inequalities": _check_gamma,
    "manufactured entropy convergence": _check_entropy_mms,
    "exact bar solutions": _check_bar,
    "uniform phase step against fine ODE": _check_phase_ode,
}


def run_checks() -> list[CheckResult]:
    return [_timed(name, fn) for name, fn in CHECKS.items()]
