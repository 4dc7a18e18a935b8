import numpy as np
import pytest

from conftest import packaged
from smavoids.diagnostics import (
    SweepError,
    check_sweep_epsilons,
    continuous_dependence_experiment,
    energy_audit,
    epsilon_sweep,
    fitted_order,
    trajectory_norms,
)
from smavoids.solver import run_simulation


@pytest.fixture(scope="module")
def relax_short():
    return run_simulation(packaged("relaxation").with_cfg(t_end=0.03))


def test_audit_matches_inline_ledger(relax_short):
    led = energy_audit(relax_short)
    assert len(led.steps) == len(relax_short.reports)
    for rec, rep in zip(led.steps, relax_short.reports):
        inline = rep.energy_audit
        for name in ("lyapunov_prev", "lyapunov", "dissipation", "work"):
            assert getattr(rec, name) == pytest.approx(getattr(inline, name), abs=1e-12)


def test_relaxation_ledger_is_balanced(relax_short):
    led = energy_audit(relax_short)
    assert led.violations == []
    assert np.all(np.diff(led.balance) <= 1e-8 * (1 + np.abs(led.lyapunov[:-1])))
    # without sources the Lyapunov functional itself decays
    assert led.lyapunov[-1] < led.lyapunov[0]


def test_audit_flags_tampered_step(relax_short):
    snaps = [s.copy() for s in relax_short.snapshots]
    snaps[3].w = snaps[3].w + 0.5
    tampered = type(relax_short)(relax_short.scenario, relax_short.cfg, snaps)
    assert energy_audit(tampered).violations


def test_fitted_order():
    x = np.array([1e-1, 1e-2, 1e-3])
    assert fitted_order(x, 3 * x**2) == pytest.approx(2.0)
    assert np.isnan(fitted_order(x, [1.0, 0.0, 1.0]))


@pytest.mark.parametrize("eps", [[0.1], [0.1, 0.01], [0.1, 0.05, 0.01], [0.1, 0.01, -1e-3]])
def test_sweep_precondition(eps):
    with pytest.raises(ValueError, match="at least 3 values spanning 2 decades"):
        check_sweep_epsilons(eps)


def test_sweep_on_equilibrium_is_all_zero():
    res = epsilon_sweep(packaged("trivial").with_cfg(t_end=0.02), [1e-1, 1e-2, 1e-3])
    assert res.constraint_residuals == [0.0] * 3
    assert res.mass_residuals == [0.0] * 3
    assert res.pressure_norms == [0.0] * 3
    assert res.dts == [0.005, 0.005, 0.0005]


def test_sweep_failure_keeps_partial_results():
    scen = packaged("compression").with_cfg(t_end=0.02, fp_max_iter=1, max_halvings=0)
    with pytest.raises(SweepError) as info:
        epsilon_sweep(scen, [1e-1, 1e-2, 1e-3])
    assert info.value.partial.failure is not None


def test_trajectory_norms_identity():
    tr = run_simulation(packaged("compression").with_cfg(t_end=0.05, epsilon=0.05, dt=0.01))
    nm = trajectory_norms(tr)
    # mass residual equals eps * pressure norm exactly for the eliminated pressure
    assert nm["mass_residual"] == pytest.approx(0.05 * nm["pressure_norm"], rel=1e-8)
    assert nm["constraint_residual"] > 0


def test_dependence_degenerate_and_scaling():
    scen = packaged("cooling").with_cfg(t_end=0.03)
    rows, ratios = continuous_dependence_experiment(scen, [0.0, 1e-2, 1e-3])
    assert rows[0].lhs == 0.0 and rows[0].rhs == 0.0
    lhs_ratio, rhs_ratio = ratios[1]
    assert 25 <= lhs_ratio <= 400
    assert rhs_ratio == pytest.approx(100, rel=1e-6)


def test_dependence_on_traction():
    scen = packaged("compression").with_cfg(t_end=0.05)
    rows, ratios = continuous_dependence_experiment(scen, [1e-2, 1e-3], kind="F")
    assert 25 <= ratios[0][0] <= 400
    with pytest.raises(ValueError, match="kind"):
        continuous_dependence_experiment(scen, [1e-2], kind="theta")
