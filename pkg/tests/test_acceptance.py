"""The ten acceptance criteria at their stated tolerances.

Each test records one ``criterion N: PASS|FAIL`` line; the lines are printed
in the pytest terminal summary and, with ``-s``, as the tests run.
"""
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, packaged
from smavoids.convex import project_C
from smavoids.diagnostics import continuous_dependence_experiment, energy_audit, epsilon_sweep
from smavoids.solver import StateSnapshot, run_simulation
from smavoids.verify import (
    bar_solution_error,
    constitutive_fd_errors,
    entropy_orders,
    gamma_lemma_violations,
    project_C_faces,
)


def record(n: int, ok: bool, detail: str):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_1_projection_oracle():
    t0 = time.perf_counter()
    x = np.random.default_rng(2024).uniform(-2.0, 3.0, size=(10_000, 3))
    err = float(np.max(np.abs(project_C(x) - project_C_faces(x))))
    dt = time.perf_counter() - t0
    record(1, err <= 1e-8 and dt < 5.0, f"max deviation {err:.2e} on 10000 points, {dt:.2f} s")


def test_2_gamma_family_lemma():
    t0 = time.perf_counter()
    counts = {eps: gamma_lemma_violations(eps) for eps in (1.0, 0.1, 0.01)}
    dt = time.perf_counter() - t0
    total = sum(a + b for a, b in counts.values())
    record(2, total == 0 and dt < 1.0, f"{total} violations on 3 x 2 grids of 200000 points, {dt:.2f} s")


def test_3_thermodynamic_consistency():
    t0 = time.perf_counter()
    errs = constitutive_fd_errors(1000, seed=1)
    dt = time.perf_counter() - t0
    worst = max(errs.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    record(3, worst <= 1e-5 and dt < 5.0, f"max relative gap {worst:.1e} ({detail}), {dt:.2f} s")


def _heating_from(cooled: StateSnapshot) -> StateSnapshot:
    return StateSnapshot(0.0, cooled.u.copy(), cooled.w.copy(), cooled.beta.copy(), cooled.p.copy())


@pytest.fixture(scope="module")
def cooling_heating():
    t0 = time.perf_counter()
    tc = run_simulation(packaged("cooling"))
    th = run_simulation(packaged("heating"), initial=_heating_from(tc.snapshots[-1]))
    return tc, th, time.perf_counter() - t0


def test_4_positivity(cooling_heating):
    trajs = [run_simulation(packaged(n)) for n in ("trivial", "relaxation", "compression")]
    trajs += list(cooling_heating[:2])
    trajs += [run_simulation(packaged("compression").with_cfg(epsilon=e, dt=min(0.01, e / 2))) for e in (0.1, 0.001)]
    checked = violations = 0
    for tr in trajs:
        assert tr.completed
        for s in tr.snapshots:
            th = s.theta(tr.cfg.epsilon)
            checked += th.size
            violations += int(np.count_nonzero(~(th > 0)))
    record(4, violations == 0, f"{violations} nonpositive temperatures among {checked} nodal values in {len(trajs)} runs")


def test_5_energy_audit():
    t0 = time.perf_counter()
    scen = packaged("relaxation")
    assert scen.mesh_spec.n_elements == 64 and scen.cfg.dt == 1e-3 and scen.cfg.epsilon == 1e-2
    tr = run_simulation(scen)
    led = energy_audit(tr)
    dt = time.perf_counter() - t0
    min_theta = min(float(np.min(s.theta(scen.cfg.epsilon))) for s in tr.snapshots)
    ok = len(led.steps) == 200 and not led.violations and dt < 30.0
    record(5, ok, f"{len(led.steps)} steps, {len(led.violations)} violations, worst relative balance "
                  f"{led.worst_relative_violation:.2e}, min theta {min_theta:.3f}, {dt:.1f} s")


def test_6_epsilon_convergence():
    t0 = time.perf_counter()
    res = epsilon_sweep(packaged("compression"), [1e-1, 1e-2, 1e-3], workers=3)
    dt = time.perf_counter() - t0
    oc = res.fitted_orders["constraint_residual"]
    om = res.fitted_orders["mass_residual"]
    monotone = all(b <= a for a, b in zip(res.constraint_residuals, res.constraint_residuals[1:]))
    ok = oc >= 0.9 and om >= 0.9 and res.pressure_spread <= 2.0 and monotone and dt < 300
    record(6, ok, f"constraint order {oc:.3f}, mass order {om:.3f}, pressure norms "
                  f"{', '.join(f'{p:.3f}' for p in res.pressure_norms)} (max/min {res.pressure_spread:.3f}), {dt:.1f} s")


def test_7_manufactured_solutions():
    t0 = time.perf_counter()
    p_space, p_time, _, _ = entropy_orders()
    bar = max(bar_solution_error().values())
    dt = time.perf_counter() - t0
    ok = p_space >= 1.8 and p_time >= 0.9 and bar <= 1e-10 and dt < 60
    record(7, ok, f"entropy spatial order {p_space:.3f}, temporal order {p_time:.3f}, bar error {bar:.1e}, {dt:.1f} s")


def test_8_continuous_dependence():
    t0 = time.perf_counter()
    rows, ratios = continuous_dependence_experiment(packaged("compression"), [0.0, 1e-2, 1e-3], workers=3)
    dt = time.perf_counter() - t0
    lhs_ratio = ratios[1][0]
    ok = rows[0].lhs == 0.0 and 25 <= lhs_ratio <= 400 and dt < 120
    record(8, ok, f"LHS at delta=0: {rows[0].lhs}, LHS ratio 1e-2/1e-3 = {lhs_ratio:.2f}, {dt:.1f} s")


def test_9_qualitative_behaviour(cooling_heating):
    tc, th, seconds = cooling_heating
    eps = tc.cfg.epsilon
    theta_c = tc.scenario.material.theta_c
    transient = 5

    sc = tc.snapshots
    window = [n for n in range(1, len(sc)) if np.max(sc[n].theta(eps)) < theta_c and tc.scenario.loads_at(sc[n].t).g > 0]
    checked = window[transient:]
    bad1 = [n for n in checked if np.any(sc[n].beta[:, 0] <= sc[n - 1].beta[:, 0])]
    bad2 = [n for n in checked if np.any(sc[n].beta[:, 1] > sc[n - 1].beta[:, 1])]

    sh = th.snapshots
    hchecked = list(range(1 + transient, len(sh)))
    bad3 = [n for n in hchecked if np.any(sh[n].beta[:, 2] <= sh[n - 1].beta[:, 2])]
    gap0 = 1.0 - sh[0].beta.sum(axis=1)
    gap1 = 1.0 - sh[-1].beta.sum(axis=1)
    toward = float(np.max(np.abs(gap1))) <= float(np.max(np.abs(gap0))) + 2 * eps
    ok = len(checked) >= 5 and len(hchecked) >= 5 and not (bad1 or bad2 or bad3) and toward and seconds < 60
    record(9, ok, f"cooling: {len(checked)} steps below theta_c checked, {len(bad1)} b1 and {len(bad2)} b2 sign "
                  f"violations; heating: {len(hchecked)} steps, {len(bad3)} b3 violations, b3 "
                  f"{sh[0].beta[:, 2].mean():.3f} -> {sh[-1].beta[:, 2].mean():.3f}, "
                  f"max |1 - sum b| {np.max(np.abs(gap1)):.3f}, {seconds:.1f} s")


def test_10_fixed_point_contraction():
    scen = packaged("compression")
    cfg = replace(scen.cfg, epsilon=1e-2, dt=5e-3, fp_max_iter=50)
    assert cfg.dt <= cfg.epsilon / 2
    tr = run_simulation(scen, cfg)
    ratios = [b / a for r in tr.reports for a, b in zip(r.fp_residuals, r.fp_residuals[1:]) if a > 0 and b > 0]
    gmean = float(np.exp(np.mean(np.log(ratios))))
    worst_iters = max(r.fp_iterations for r in tr.reports)
    halvings = sum(r.halvings for r in tr.reports)
    ok = tr.completed and halvings == 0 and worst_iters <= 50 and gmean < 0.9
    record(10, ok, f"{len(tr.reports)} steps, max {worst_iters} iterations, {halvings} halvings, "
                   f"geometric-mean residual ratio {gmean:.4f}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
