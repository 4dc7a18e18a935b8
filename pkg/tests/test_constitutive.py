import numpy as np
import pytest

from smavoids.constitutive import (
    LocalState,
    MaterialParams,
    entropy_density,
    entropy_flux,
    free_energy,
    phase_driving_force,
    stress,
)
from smavoids.verify import constitutive_fd_errors

M = MaterialParams()
M2 = MaterialParams(theta_c=2.0)


def st(strain=0.0, beta=(0.0, 0.0, 0.0), theta=1.0, grad=(0.0, 0.0, 0.0), p=0.0):
    return LocalState(strain, np.array(beta, float), theta, np.array(grad, float), p)


def test_defaults_are_normalized():
    assert (M.C_bar, M.k_grad, M.lam, M.upsilon, M.c_visc, M.latent) == (1.0,) * 6


@pytest.mark.parametrize(
    "kw, fragment",
    [
        ({"tau_bar": 0.5}, "tau_bar"),
        ({"theta_0": 0.0}, "theta_0"),
        ({"theta_c": 0.5}, "theta_c"),
        ({"K": -1.0}, "K"),
        ({"c_visc": -1.0}, "c_visc"),
    ],
)
def test_invalid_material_rejected(kw, fragment):
    with pytest.raises(ValueError, match=fragment):
        MaterialParams(**kw)


def test_unchecked_collects_all_errors():
    errs = MaterialParams.unchecked(tau_bar=1.0, K=0.0).validate()
    assert len(errs) == 2


def test_free_energy_examples():
    assert free_energy(st(), M) == 0.0
    assert free_energy(st(beta=(0, 0, 1)), M) == pytest.approx(0.0)
    m = MaterialParams(theta_0=2.0, theta_c=3.0)
    assert free_energy(st(beta=(0, 0, 1), theta=2.0), m) == pytest.approx(-2 * np.log(2))
    assert free_energy(st(beta=(1.2, 0, 0)), M) == np.inf


def test_free_energy_is_vectorized():
    b = np.array([[0.2, 0.2, 0.2], [0.9, 0.9, 0.0]])
    out = free_energy(LocalState(np.zeros(2), b, np.ones(2), np.zeros((2, 3))), M)
    assert np.isfinite(out[0]) and out[1] == np.inf


def test_stress_examples():
    assert stress(st(strain=0.1, beta=(0.3, 0.3, 0.3)), M) == pytest.approx(0.1)
    assert stress(st(beta=(1, 0, 0)), M2) == pytest.approx(-1.0)
    assert stress(st(beta=(0.2, 0.2, 0), p=0.3), M) == pytest.approx(-0.3)


def test_driving_force_examples():
    np.testing.assert_allclose(phase_driving_force(st(), M), 0.0)
    np.testing.assert_allclose(phase_driving_force(st(strain=0.5), M2), [0.5, -0.5, 0.0])
    np.testing.assert_allclose(phase_driving_force(st(theta=2.0), M), [0.0, 0.0, 1.0])
    np.testing.assert_allclose(phase_driving_force(st(p=0.2), M), [0.2, 0.2, 0.2])


def test_entropy_examples():
    assert entropy_density(st(), M) == pytest.approx(1.0)
    assert entropy_density(st(theta=np.e), M) == pytest.approx(2.0)
    assert entropy_density(st(beta=(0, 0, 1)), M) == pytest.approx(2.0)


def test_entropy_small_strain_form_drops_only_the_coupling_term():
    s = st(strain=0.4, beta=(0.5, 0.1, 0.2), theta=0.8)
    full = entropy_density(s, M)
    short = entropy_density(s, M, small_strain=True)
    assert full - short == pytest.approx(0.4 * 0.4 * M.tau_bar)
    hot = st(strain=0.4, beta=(0.5, 0.1, 0.2), theta=2.0)
    assert entropy_density(hot, M) == entropy_density(hot, M, small_strain=True)


def test_entropy_flux():
    assert entropy_flux(0.0, M) == 0.0
    assert entropy_flux(2.0, M) == -2.0
    x = np.linspace(0, 1, 11)
    w = np.log(np.exp(0.7 * x))
    np.testing.assert_allclose(entropy_flux(np.gradient(w, x), M), -0.7)


def test_nonpositive_temperature_rejected():
    for fn in (free_energy, stress, phase_driving_force, entropy_density):
        with pytest.raises(ValueError):
            fn(st(theta=0.0), M)


def test_finite_difference_consistency():
    err = constitutive_fd_errors(300, seed=3, m=MaterialParams(K=1.7, C_bar=0.6, l_a=1.4, tau_bar=-0.3))
    assert max(err.values()) < 1e-5, err


def test_free_energy_convex_in_beta():
    rng = np.random.default_rng(5)
    n = 1000
    a = rng.dirichlet(np.ones(4), n)[:, :3]
    b = rng.dirichlet(np.ones(4), n)[:, :3]
    strain = rng.uniform(-1, 1, n)
    theta = rng.uniform(0.3, 3, n)
    grad = rng.normal(size=(n, 3))

    def f(beta):
        return free_energy(LocalState(strain, beta, theta, grad), M)

    assert np.all(f(0.5 * (a + b)) <= 0.5 * (f(a) + f(b)) + 1e-12)
