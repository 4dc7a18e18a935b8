import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from smavoids.convex import (
    RegularizationParams,
    delta_eps,
    delta_eps_prime,
    dist_C,
    gamma_eps,
    gamma_eps_prime,
    hat_gamma_eps,
    in_C,
    project_C,
    tau_of_theta,
    yosida_alpha,
    yosida_energy,
)
from smavoids.constitutive import MaterialParams
from smavoids.verify import project_C_faces, project_C_sorting

points = arrays(np.float64, 3, elements=st.floats(-5, 5, allow_nan=False))


def test_interior_point_is_fixed():
    x = np.array([0.2, 0.3, 0.1])
    assert np.array_equal(project_C(x), x)


def test_equal_overshoot_lands_on_barycenter():
    np.testing.assert_allclose(project_C([0.5, 0.5, 0.5]), [1 / 3] * 3, atol=1e-15)


def test_mixed_signs_matches_face_oracle():
    x = np.array([1.7, -0.4, 0.2])
    np.testing.assert_allclose(project_C(x), project_C_faces(x)[0], atol=1e-14)
    np.testing.assert_allclose(project_C(x), [1.0, 0.0, 0.0], atol=1e-14)


def test_negative_orthant_maps_to_origin():
    assert np.array_equal(project_C([-1.0, -2.0, -0.1]), np.zeros(3))


def test_batched_shape_preserved():
    x = np.random.default_rng(0).normal(size=(4, 5, 3))
    assert project_C(x).shape == x.shape
    assert dist_C(x).shape == (4, 5)


@settings(max_examples=300, deadline=None)
@given(points)
def test_projection_properties(x):
    y = project_C(x)
    assert in_C(y)
    assert np.array_equal(project_C(y), y)
    np.testing.assert_allclose(y, project_C_sorting(x)[0], atol=1e-12)
    # variational inequality: (x - y).(z - y) <= 0 for the vertices z of C
    for z in np.vstack([np.zeros(3), np.eye(3)]):
        assert (x - y) @ (z - y) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(points, points)
def test_projection_is_nonexpansive(x, z):
    assert np.linalg.norm(project_C(x) - project_C(z)) <= np.linalg.norm(x - z) + 1e-12


def test_upper_box_bounds_never_bind():
    rng = np.random.default_rng(1)
    y = project_C(rng.uniform(-3, 10, size=(5000, 3)))
    assert np.all(y <= 1.0)


def test_yosida_example():
    np.testing.assert_allclose(yosida_alpha([1.5, 0.0, 0.0], 0.5), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(yosida_energy([1.5, 0.0, 0.0], RegularizationParams(0.5)), 0.25)


def test_yosida_vanishes_on_C():
    assert np.array_equal(yosida_alpha([0.2, 0.2, 0.2], 0.01), np.zeros(3))


def test_yosida_is_gradient_of_energy():
    x = np.array([0.9, 0.4, -0.2])
    eps, h = 0.1, 1e-6
    fd = [(yosida_energy(x + h * e, eps) - yosida_energy(x - h * e, eps)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(yosida_alpha(x, eps), fd, rtol=1e-6)


@settings(max_examples=200, deadline=None)
@given(points, points)
def test_yosida_is_monotone_and_lipschitz(x, z):
    eps = 0.3
    da = yosida_alpha(x, eps) - yosida_alpha(z, eps)
    assert da @ (x - z) >= -1e-12
    assert np.linalg.norm(da) <= np.linalg.norm(x - z) / eps + 1e-9


def test_regularization_rejects_nonpositive():
    with pytest.raises(ValueError):
        RegularizationParams(0.0)


def test_gamma_examples():
    assert gamma_eps(0.5, 1.0) == pytest.approx(np.exp(0.5))
    assert gamma_eps(2.0, 1.0) == pytest.approx(2 * np.e)
    assert hat_gamma_eps(1.0, 1.0) == pytest.approx(np.e)
    assert hat_gamma_eps(2.0, 1.0) == pytest.approx(2.5 * np.e)


def test_gamma_is_c1_at_the_cap():
    for eps in (1.0, 0.1):
        r = 1 / eps
        h = 1e-7
        left = (gamma_eps(r, eps) - gamma_eps(r - h, eps)) / h
        right = (gamma_eps(r + h, eps) - gamma_eps(r, eps)) / h
        assert left == pytest.approx(right, rel=1e-5)
        assert gamma_eps_prime(r + 1, eps) == pytest.approx(np.exp(r))


def test_hat_gamma_derivative_is_gamma():
    r = np.linspace(-3, 4, 41)
    h = 1e-6
    fd = (hat_gamma_eps(r + h, 0.5) - hat_gamma_eps(r - h, 0.5)) / (2 * h)
    np.testing.assert_allclose(fd, gamma_eps(r, 0.5), rtol=1e-6)


def test_delta_inverts_gamma():
    r = np.linspace(-20, 30, 501)
    np.testing.assert_allclose(delta_eps(gamma_eps(r, 0.1), 0.1), r, atol=1e-9)
    s = np.geomspace(1e-3, 1e6, 50)
    np.testing.assert_allclose(delta_eps_prime(s, 0.1) * gamma_eps_prime(delta_eps(s, 0.1), 0.1), 1.0, rtol=1e-12)


def test_delta_rejects_nonpositive():
    with pytest.raises(ValueError):
        delta_eps(0.0, 0.1)
    with pytest.raises(ValueError):
        delta_eps_prime(-1.0, 0.1)


def test_gamma_is_positive_and_increasing():
    r = np.linspace(-600, 400, 2001)
    g = gamma_eps(r, 1e-2)
    assert np.all(g > 0)
    assert np.all(np.diff(g) > 0)


def test_tau_examples():
    m = MaterialParams()
    assert tau_of_theta(0.5, m) == pytest.approx(1.0)
    assert tau_of_theta(m.theta_c, m) == 0.0
    assert tau_of_theta(3.0, m) == 0.0
    with pytest.raises(ValueError):
        tau_of_theta(0.0, m)
