"""Convex geometry of the admissible phase set and the regularizations built on it.

The admissible set is the truncated simplex

    C = {b in R^3 : 0 <= b_i <= 1, b_1 + b_2 + b_3 <= 1}

Since ``b_i >= 0`` and ``sum(b) <= 1`` already force ``b_i <= 1``, the upper
bounds are never active and C is the corner simplex spanned by the origin and
the three unit vectors.  Every function here accepts a single triple or an
array of shape ``(..., 3)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RegularizationParams",
    "in_C",
    "project_C",
    "dist_C",
    "yosida_alpha",
    "yosida_energy",
    "gamma_eps",
    "gamma_eps_prime",
    "delta_eps",
    "delta_eps_prime",
    "hat_gamma_eps",
    "tau_of_theta",
]

# KKT checks carry a rounding allowance; outputs are snapped back into C exactly.
_KKT_TOL = 1e-13


@dataclass(frozen=True)
class RegularizationParams:
    """Shared regularization parameter ``epsilon`` (Yosida, temperature cap, penalty)."""

    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon!r}")


def _eps(reg) -> float:
    return reg.epsilon if isinstance(reg, RegularizationParams) else RegularizationParams(float(reg)).epsilon


def in_C(x) -> np.ndarray:
    """Exact membership test, evaluated with the same sum ordering everywhere."""
    x = np.asarray(x, dtype=float)
    s = (x[..., 0] + x[..., 1]) + x[..., 2]
    return np.all(x >= 0.0, axis=-1) & (s <= 1.0)


# Active sets: (lower bounds held at zero, sum constraint active).  The empty
# set comes first so that points of C are returned untouched.
_ACTIVE_SETS = [
    (zeros, sum_active)
    for sum_active in (False, True)
    for r in range(4)
    for zeros in itertools.combinations(range(3), r)
    if not (sum_active and r == 3)
]


def _kkt_candidate(x, zeros, sum_active):
    """Candidate minimizer on one face plus a mask of rows where KKT holds."""
    free = [i for i in range(3) if i not in zeros]
    y = np.zeros_like(x)
    if sum_active:
        mu = (x[:, free].sum(axis=1) - 1.0) / len(free)
    else:
        mu = np.zeros(x.shape[0])
    y[:, free] = x[:, free] - mu[:, None]
    ok = np.all(y[:, free] >= -_KKT_TOL, axis=1)
    # multipliers of the active lower bounds: nu_i = mu - x_i >= 0
    for i in zeros:
        ok &= mu - x[:, i] >= -_KKT_TOL
    if sum_active:
        ok &= mu >= -_KKT_TOL
    else:
        ok &= y.sum(axis=1) <= 1.0 + _KKT_TOL
    return y, ok


def _snap_into_C(y):
    """Remove rounding residue so that ``in_C`` holds bit-exactly."""
    y = np.maximum(y, 0.0)
    for _ in range(64):
        s = (y[:, 0] + y[:, 1]) + y[:, 2]
        over = s > 1.0
        if not over.any():
            break
        rows = np.flatnonzero(over)
        cols = np.argmax(y[rows], axis=1)
        y[rows, cols] = np.nextafter(y[rows, cols], 0.0)
    return y


def project_C(x) -> np.ndarray:
    """Euclidean projection onto C by exhaustive active-set enumeration.

    Each of the 14 feasible active sets gives a closed-form candidate; the one
    satisfying the KKT conditions is the projection.  Points already in C are
    returned unchanged, so the map is idempotent bit for bit.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    if shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {shape}")
    flat = x.reshape(-1, 3)
    out = flat.copy()
    todo = np.flatnonzero(~in_C(flat))
    if todo.size:
        pts = flat[todo]
        res = np.empty_like(pts)
        pending = np.ones(len(pts), dtype=bool)
        for zeros, sum_active in _ACTIVE_SETS[1:]:
            idx = np.flatnonzero(pending)
            if idx.size == 0:
                break
            y, ok = _kkt_candidate(pts[idx], zeros, sum_active)
            res[idx[ok]] = y[ok]
            pending[idx[ok]] = False
        if pending.any():
            # cannot happen for finite input; keep NaN rows visible
            res[pending] = np.nan
        out[todo] = _snap_into_C(res)
    return out.reshape(shape)


def dist_C(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.linalg.norm(x - project_C(x), axis=-1)


def yosida_alpha(x, reg) -> np.ndarray:
    """Moreau-Yosida approximation of the subdifferential of the indicator of C.

    ``(x - project_C(x)) / epsilon``: single valued, monotone, ``1/epsilon``
    Lipschitz, and identically zero on C.
    """
    x = np.asarray(x, dtype=float)
    return (x - project_C(x)) / _eps(reg)


def yosida_energy(x, reg) -> np.ndarray:
    """Moreau envelope of the indicator: ``dist(x, C)**2 / (2 epsilon)``."""
    return dist_C(x) ** 2 / (2.0 * _eps(reg))


def _cap(reg):
    inv = 1.0 / _eps(reg)
    with np.errstate(over="ignore"):
        return inv, np.exp(inv)


def gamma_eps(r, reg):
    """Exponential capped by its tangent line beyond ``r = 1/epsilon``."""
    r = np.asarray(r, dtype=float)
    inv, e_inv = _cap(reg)
    with np.errstate(over="ignore", invalid="ignore"):
        lin = (r - inv) * e_inv + e_inv
        out = np.where(r <= inv, np.exp(np.minimum(r, inv)), lin)
    return out[()] if out.ndim == 0 else out


def gamma_eps_prime(r, reg):
    r = np.asarray(r, dtype=float)
    inv, e_inv = _cap(reg)
    out = np.where(r <= inv, np.exp(np.minimum(r, inv)), e_inv)
    return out[()] if out.ndim == 0 else out


def delta_eps(s, reg):
    """Inverse of :func:`gamma_eps` on ``(0, inf)``."""
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("delta_eps is defined for positive arguments only")
    inv, e_inv = _cap(reg)
    with np.errstate(invalid="ignore"):
        out = np.where(s <= e_inv, np.log(s), inv + (s - e_inv) / e_inv)
    return out[()] if out.ndim == 0 else out


def delta_eps_prime(s, reg):
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("delta_eps is defined for positive arguments only")
    inv, e_inv = _cap(reg)
    out = np.where(s <= e_inv, 1.0 / s, 1.0 / e_inv)
    return out[()] if out.ndim == 0 else out


def hat_gamma_eps(r, reg):
    """``1 + integral_0^r gamma_eps``, closed form on each branch."""
    r = np.asarray(r, dtype=float)
    inv, e_inv = _cap(reg)
    d = r - inv
    with np.errstate(over="ignore", invalid="ignore"):
        quad = e_inv * (1.0 + d + 0.5 * d * d)
        out = np.where(r <= inv, np.exp(np.minimum(r, inv)), quad)
    return out[()] if out.ndim == 0 else out


def tau_of_theta(theta, params):
    """Stress-temperature coupling: ``(theta - theta_c) * tau_bar`` below theta_c, zero above."""
    theta = np.asarray(theta, dtype=float)
    if np.any(~(theta > 0)):
        raise ValueError("temperature must be positive")
    out = np.where(theta <= params.theta_c, (theta - params.theta_c) * params.tau_bar, 0.0)
    return out[()] if out.ndim == 0 else out
