"""Discrete energy ledger of one time step.

Testing the entropy step by ``gamma_eps(w) + w``, the momentum step by
``u - u_n``, the penalty relation by ``p`` and the phase step by
``b - b_n`` and summing gives

    L(n+1) - L(n) + dissipation = work - (convexity slack >= 0)

with

    L = C_bar int(hat_gamma_eps(w) + w^2/2) + k/2 |grad b|^2 + int j_eps(b) + 1/2 u.A.u

Integrals of nonlinear nodal functions use the lumped (nodal) rule, matching
the quadrature inside the solver so the identity telescopes exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex import gamma_eps, hat_gamma_eps, yosida_energy
from .discretization import element_to_nodes
from .solver import Operators, StateSnapshot, coupling_stress
from .convex import tau_of_theta


@dataclass(frozen=True)
class StepLedger:
    lyapunov_prev: float
    lyapunov: float
    dissipation: float
    work: float

    @property
    def balance(self) -> float:
        """``L(n+1) - L(n) + dissipation - work``; nonpositive up to solver tolerances."""
        return self.lyapunov - self.lyapunov_prev + self.dissipation - self.work

    def violates(self, rel_tol: float = 1e-8) -> bool:
        return self.balance > rel_tol * (1.0 + abs(self.lyapunov_prev))


def lyapunov(ops: Operators, s: StateSnapshot, eps: float) -> float:
    m = ops.material
    thermal = m.C_bar * np.dot(ops.ML, hat_gamma_eps(s.w, eps) + 0.5 * s.w**2)
    grad = 0.5 * m.k_grad * sum(s.beta[:, i] @ (ops.B @ s.beta[:, i]) for i in range(3))
    yos = np.dot(ops.ML, yosida_energy(s.beta, eps))
    elastic = 0.5 * s.u @ (ops.A @ s.u)
    return float(thermal + grad + yos + elastic)


def step_ledger(ops: Operators, prev: StateSnapshot, new: StateSnapshot, F: np.ndarray, r: np.ndarray,
                dt: float, eps: float) -> StepLedger:
    m = ops.material
    theta = gamma_eps(new.w, eps)
    mult = theta + new.w
    db = new.beta - prev.beta
    du = new.u - prev.u

    diss = dt * (m.lam * (new.w @ (ops.B @ mult)) + eps * np.sum(ops.h * new.p**2))
    diss += sum(m.c_visc * db[:, i] @ (ops.M @ db[:, i]) + m.upsilon * db[:, i] @ (ops.B @ db[:, i])
                for i in range(3)) / dt

    Q = coupling_stress(ops, new.beta, new.w, eps)
    tw = tau_of_theta(theta, m) * element_to_nodes(ops.mesh, ops.D @ new.u)
    work = dt * (r @ mult) + F @ du
    work += np.sum(ops.h * Q * (ops.D @ du))
    work += (db[:, 0] - db[:, 1]) @ tw
    work -= m.latent * np.sum(ops.ML * db[:, 2] * (new.w + m.theta_0))

    return StepLedger(lyapunov(ops, prev, eps), lyapunov(ops, new, eps), float(diss), float(work))
