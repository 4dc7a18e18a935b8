"""Constitutive laws of the three-phase mixture with voids (1D small strain).

Phase 1 and 2 are the martensite variants, phase 3 is austenite and
``1 - (b1 + b2 + b3)`` is the void fraction.  All functions broadcast over
arrays: ``beta`` and ``grad_beta`` carry a trailing axis of length 3.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .convex import in_C, tau_of_theta

__all__ = [
    "MaterialParams",
    "LocalState",
    "free_energy",
    "stress",
    "phase_driving_force",
    "entropy_density",
    "entropy_flux",
]


@dataclass(frozen=True)
class MaterialParams:
    """Physical constants.  Defaults are the normalized set c = k = l_a/theta_0 = C_bar = lambda = upsilon = 1."""

    K: float = 1.0
    C_bar: float = 1.0
    l_a: float = 1.0
    theta_0: float = 1.0
    theta_c: float = 1.5
    tau_bar: float = -1.0
    c_visc: float = 1.0
    k_grad: float = 1.0
    upsilon: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    @classmethod
    def unchecked(cls, **kw) -> "MaterialParams":
        """Build without validation, so callers can collect every error at once."""
        obj = cls.__new__(cls)
        for f in fields(cls):
            object.__setattr__(obj, f.name, float(kw.get(f.name, f.default)))
        return obj

    def validate(self) -> list[str]:
        errs = []
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v):
                errs.append(f"{f.name} must be finite")
        if not self.theta_0 > 0:
            errs.append("theta_0 must be positive (absolute temperature)")
        if not self.theta_c > self.theta_0:
            errs.append("theta_c must exceed theta_0")
        if not self.tau_bar <= 0:
            errs.append("tau_bar must be <= 0 (stress-temperature slope is nonpositive)")
        if not self.K > 0:
            errs.append("K must be positive")
        if not self.k_grad > 0:
            errs.append("k_grad must be positive")
        for name in ("c_visc", "upsilon", "lam", "C_bar"):
            if not getattr(self, name) >= 0:
                errs.append(f"{name} must be nonnegative")
        return errs

    @property
    def latent(self) -> float:
        """Latent heat per unit temperature, ``l_a / theta_0``."""
        return self.l_a / self.theta_0


@dataclass
class LocalState:
    strain: float | np.ndarray
    beta: np.ndarray
    theta: float | np.ndarray
    grad_beta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pressure: float | np.ndarray = 0.0


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(~(theta > 0)):
        raise ValueError("temperature must be positive")
    return theta


def free_energy(s: LocalState, m: MaterialParams):
    """Helmholtz free energy density; ``inf`` where beta lies outside C."""
    theta = _check_theta(s.theta)
    b = np.asarray(s.beta, dtype=float)
    gb = np.asarray(s.grad_beta, dtype=float)
    eps = np.asarray(s.strain, dtype=float)
    tau = tau_of_theta(theta, m)
    psi = (
        0.5 * b.sum(axis=-1) * m.K * eps**2
        - (b[..., 0] - b[..., 1]) * tau * eps
        - b[..., 2] * m.latent * (theta - m.theta_0)
        - m.C_bar * theta * np.log(theta)
        + 0.5 * m.k_grad * np.sum(gb**2, axis=-1)
    )
    out = np.where(in_C(b), psi, np.inf)
    return out[()] if out.ndim == 0 else out


def stress(s: LocalState, m: MaterialParams):
    theta = _check_theta(s.theta)
    b = np.asarray(s.beta, dtype=float)
    return m.K * np.asarray(s.strain) - (b[..., 0] - b[..., 1]) * tau_of_theta(theta, m) - np.asarray(s.pressure)


def phase_driving_force(s: LocalState, m: MaterialParams) -> np.ndarray:
    """Right-hand side of the phase gradient flow, ``(tau*eps + p, -tau*eps + p, l_a/theta_0*(theta - theta_0) + p)``.

    Tension at low temperature favours variant 1, heating above theta_0
    favours austenite.
    """
    theta = _check_theta(s.theta)
    te = tau_of_theta(theta, m) * np.asarray(s.strain, dtype=float)
    p = np.asarray(s.pressure, dtype=float)
    return np.stack(np.broadcast_arrays(te + p, -te + p, m.latent * (theta - m.theta_0) + p), axis=-1)


def entropy_density(s: LocalState, m: MaterialParams, small_strain: bool = False):
    """Entropy ``-dPsi/dtheta``.

    Below theta_c the coupling ``-(b1 - b2) tau(theta) strain`` contributes
    ``(b1 - b2) tau_bar strain``.  ``small_strain=True`` drops that term and
    returns ``C_bar (1 + log theta) + b3 l_a/theta_0``, the entropy carried by
    the solver's heat balance.  At theta = theta_c the left derivative is used.
    """
    theta = _check_theta(s.theta)
    b = np.asarray(s.beta, dtype=float)
    out = m.C_bar * (1.0 + np.log(theta)) + b[..., 2] * m.latent
    if small_strain:
        return out
    slope = np.where(theta <= m.theta_c, m.tau_bar, 0.0)
    return out + (b[..., 0] - b[..., 1]) * slope * np.asarray(s.strain, dtype=float)


def entropy_flux(grad_w, m: MaterialParams):
    """Entropy flux ``-lambda * grad(log theta)``."""
    return -m.lam * np.asarray(grad_w, dtype=float)
