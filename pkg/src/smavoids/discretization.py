"""1D P1 finite elements on an interval.

Displacement, log-temperature and phase fractions are continuous piecewise
linear; the pressure is constant per element.  Operators are assembled as
``scipy.sparse`` matrices:

* ``A_elastic``  ``K * int u' v'``
* ``B_laplace``  ``int u' v'`` (pure Neumann, kernel = constants)
* ``H_div``      ``<H q, v> = int q v'``, shape (n_nodes, n_elements)
* ``M_mass``     consistent mass matrix
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .constitutive import MaterialParams

KINDS = ("A_elastic", "B_laplace", "H_div", "M_mass")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray
    gamma0_nodes: tuple[int, ...]
    gamma1_nodes: tuple[int, ...]

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 3:
            raise ConfigurationError("mesh needs at least 2 elements")
        if np.any(np.diff(x) <= 0):
            raise ConfigurationError("mesh nodes must be strictly increasing")
        if not self.gamma0_nodes or not self.gamma1_nodes:
            raise ConfigurationError("both boundary parts Gamma0 and Gamma1 must be nonempty")
        if set(self.gamma0_nodes) & set(self.gamma1_nodes):
            raise ConfigurationError("Gamma0 and Gamma1 must be disjoint")
        object.__setattr__(self, "nodes", x)

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def elements(self) -> np.ndarray:
        i = np.arange(self.n_elements)
        return np.column_stack([i, i + 1])

    @cached_property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def length(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])

    @property
    def boundary_nodes(self) -> tuple[int, int]:
        return (0, self.n_nodes - 1)

    @cached_property
    def free_nodes(self) -> np.ndarray:
        """Displacement unknowns left after removing Gamma0."""
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[list(self.gamma0_nodes)] = False
        return np.flatnonzero(mask)


def build_mesh(L: float, n_elements: int, gamma0_side: str = "left") -> Mesh1D:
    """Uniform mesh of ``[0, L]``; the chosen end is clamped, the other carries traction."""
    if not L > 0:
        raise ConfigurationError(f"length must be positive, got {L}")
    if int(n_elements) != n_elements or n_elements < 2:
        raise ConfigurationError(f"n_elements must be an integer >= 2, got {n_elements}")
    n = int(n_elements)
    nodes = np.linspace(0.0, L, n + 1)
    if gamma0_side == "left":
        g0, g1 = (0,), (n,)
    elif gamma0_side == "right":
        g0, g1 = (n,), (0,)
    else:
        raise ConfigurationError(f"gamma0_side must be 'left' or 'right', got {gamma0_side!r}")
    return Mesh1D(nodes, g0, g1)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    matrix: sp.csr_matrix
    kind: str


def gradient_matrix(mesh: Mesh1D) -> sp.csr_matrix:
    """Elementwise derivative of a P1 field, shape (n_elements, n_nodes)."""
    ne, h = mesh.n_elements, mesh.h
    rows = np.repeat(np.arange(ne), 2)
    cols = mesh.elements.ravel()
    vals = np.column_stack([-1.0 / h, 1.0 / h]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, mesh.n_nodes))


def _stiffness(mesh: Mesh1D) -> sp.csr_matrix:
    D = gradient_matrix(mesh)
    return (D.T @ sp.diags(mesh.h) @ D).tocsr()


def _mass(mesh: Mesh1D) -> sp.csr_matrix:
    h = mesh.h
    local = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    rows = np.repeat(mesh.elements, 2, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 2)).ravel()
    vals = (h[:, None, None] * local[None]).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes))


def assemble(kind: str, mesh: Mesh1D, m: MaterialParams | None = None) -> DiscreteOperator:
    """Assemble one of the four global operators (only A carries a material coefficient)."""
    if kind == "A_elastic":
        K = (m or MaterialParams()).K
        mat = K * _stiffness(mesh)
    elif kind == "B_laplace":
        mat = _stiffness(mesh)
    elif kind == "M_mass":
        mat = _mass(mesh)
    elif kind == "H_div":
        mat = (gradient_matrix(mesh).T @ sp.diags(mesh.h)).tocsr()
    else:
        raise ConfigurationError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
    return DiscreteOperator(sp.csr_matrix(mat), kind)


def lumped_mass(mesh: Mesh1D) -> np.ndarray:
    """Row sums of the mass matrix (nodal quadrature weights)."""
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, mesh.elements[:, 0], 0.5 * mesh.h)
    np.add.at(w, mesh.elements[:, 1], 0.5 * mesh.h)
    return w


def element_average(mesh: Mesh1D, nodal: np.ndarray) -> np.ndarray:
    """L2 projection of a P1 field onto element constants (mean of the two end values)."""
    nodal = np.asarray(nodal, dtype=float)
    return 0.5 * (nodal[:-1] + nodal[1:])


def element_to_nodes(mesh: Mesh1D, values: np.ndarray) -> np.ndarray:
    """Load vector ``int q phi_j`` of an element-constant field ``q``."""
    half = 0.5 * mesh.h * np.asarray(values, dtype=float)
    out = np.zeros(mesh.n_nodes)
    out[:-1] += half
    out[1:] += half
    return out


def neumann_load(mesh: Mesh1D, boundary_data: dict[int, float] | None = None, interior=None) -> np.ndarray:
    """Load functional ``int R v + sum_boundary Pi v``.

    ``interior`` is a nodal (or constant) source assembled with the consistent
    mass matrix; ``boundary_data`` maps boundary node indices to point values.
    """
    load = np.zeros(mesh.n_nodes)
    if interior is not None:
        src = np.broadcast_to(np.asarray(interior, dtype=float), (mesh.n_nodes,))
        load += _mass(mesh) @ src
    for node, val in (boundary_data or {}).items():
        if node not in mesh.boundary_nodes:
            raise ConfigurationError(f"node {node} is not a boundary node")
        load[node] += float(val)
    return load


def coercivity_constant(mesh: Mesh1D, m: MaterialParams | None = None) -> float:
    """Smallest eigenvalue of the Gamma0-constrained elasticity matrix."""
    A = assemble("A_elastic", mesh, m).matrix.toarray()
    f = mesh.free_nodes
    return float(np.linalg.eigvalsh(A[np.ix_(f, f)])[0])
