import numpy as np
import pytest

from smavoids.constitutive import MaterialParams
from smavoids.discretization import (
    ConfigurationError,
    assemble,
    build_mesh,
    coercivity_constant,
    element_average,
    element_to_nodes,
    gradient_matrix,
    lumped_mass,
    neumann_load,
)
from smavoids.verify import elastic_mms_error


def test_mesh_example():
    m = build_mesh(1.0, 4)
    np.testing.assert_allclose(m.nodes, [0, 0.25, 0.5, 0.75, 1])
    assert m.gamma0_nodes == (0,) and m.gamma1_nodes == (4,)
    assert m.n_elements == 4 and m.length == 1.0
    np.testing.assert_array_equal(m.free_nodes, [1, 2, 3, 4])


def test_mesh_right_clamped():
    m = build_mesh(2.0, 2, "right")
    np.testing.assert_allclose(m.h, [1.0, 1.0])
    assert m.gamma0_nodes == (2,) and m.gamma1_nodes == (0,)


@pytest.mark.parametrize("args", [(1.0, 1), (0.0, 4), (1.0, 4, "top")])
def test_invalid_mesh(args):
    with pytest.raises(ConfigurationError):
        build_mesh(*args)


def test_operator_identities():
    m = build_mesh(1.5, 7)
    B = assemble("B_laplace", m).matrix
    M = assemble("M_mass", m).matrix
    np.testing.assert_allclose(B @ np.ones(m.n_nodes), 0.0, atol=1e-13)
    assert M.sum() == pytest.approx(1.5)
    np.testing.assert_allclose(lumped_mass(m), np.asarray(M.sum(axis=1)).ravel())
    with pytest.raises(ConfigurationError):
        assemble("curl", m)


def test_bar_under_end_load():
    m = build_mesh(1.0, 2)
    A = assemble("A_elastic", m, MaterialParams()).matrix.toarray()
    f = m.free_nodes
    u = np.zeros(3)
    u[f] = np.linalg.solve(A[np.ix_(f, f)], [0.0, 1.0])
    np.testing.assert_allclose(u, [0, 0.5, 1.0], atol=1e-14)


def test_elastic_matrix_scales_with_K():
    m = build_mesh(1.0, 5)
    a1 = assemble("A_elastic", m, MaterialParams()).matrix
    a3 = assemble("A_elastic", m, MaterialParams(K=3.0)).matrix
    np.testing.assert_allclose(a3.toarray(), 3 * a1.toarray())


def test_discrete_divergence_theorem():
    m = build_mesh(1.0, 9)
    H = assemble("H_div", m).matrix
    u = np.random.default_rng(2).normal(size=m.n_nodes)
    # int div u = u(L) - u(0)
    assert np.ones(m.n_elements) @ (H.T @ u) == pytest.approx(u[-1] - u[0], abs=1e-12)
    D = gradient_matrix(m)
    np.testing.assert_allclose(H.toarray(), D.T.toarray() * m.h)


def test_element_transfers():
    m = build_mesh(1.0, 4)
    np.testing.assert_allclose(element_average(m, np.arange(5.0)), [0.5, 1.5, 2.5, 3.5])
    q = np.array([1.0, 2.0, 3.0, 4.0])
    assert element_to_nodes(m, q).sum() == pytest.approx(np.sum(q * m.h))


def test_neumann_load_examples():
    m = build_mesh(1.0, 8)
    assert not np.any(neumann_load(m))
    assert neumann_load(m, interior=1.0).sum() == pytest.approx(1.0)
    g = neumann_load(m, {8: 0.7})
    assert g[8] == 0.7 and np.count_nonzero(g) == 1
    with pytest.raises(ConfigurationError):
        neumann_load(m, {3: 1.0})


def test_coercivity_positive_and_shrinking():
    c = [coercivity_constant(build_mesh(1.0, n)) for n in (4, 8, 16)]
    assert all(v > 0 for v in c)
    assert c[0] > c[1] > c[2]


def test_elastic_manufactured_order():
    ns = [8, 16, 32, 64, 128]
    errs = [elastic_mms_error(n) for n in ns]
    order = np.polyfit(np.log([1 / n for n in ns]), np.log(errs), 1)[0]
    assert order >= 1.8
