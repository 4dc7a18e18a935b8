"""PNG figures for the report directories written by the CLI."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_run", "plot_sweep", "plot_dependence"]

_PHASES = ("variant 1", "variant 2", "austenite")


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_run(traj, outdir) -> list[Path]:
    """Probe histories, energy ledger and final profiles of one run."""
    outdir = Path(outdir)
    scen = traj.scenario
    eps = traj.cfg.epsilon
    x = scen.mesh().nodes
    k = scen.probe_node
    snaps = traj.snapshots
    t = np.array([s.t for s in snaps])
    out = []

    fig, (a0, a1) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    a0.plot(t, [s.theta(eps)[k] for s in snaps], color="tab:red")
    a0.axhline(scen.material.theta_c, ls=":", color="grey", label=r"$\theta_c$")
    a0.axhline(scen.material.theta_0, ls="--", color="grey", label=r"$\theta_0$")
    a0.set_ylabel(rf"$\theta$ at x = {x[k]:.3g}")
    a0.legend(loc="best", fontsize=8)
    for j, name in enumerate(_PHASES):
        a1.plot(t, [s.beta[k, j] for s in snaps], label=name)
    a1.plot(t, [s.beta[k].sum() for s in snaps], "k--", lw=0.8, label="sum")
    a1.set_xlabel("t")
    a1.set_ylabel("phase fraction")
    a1.legend(loc="best", fontsize=8)
    out.append(_save(fig, outdir / "probe_history.png"))

    leds = [r.energy_audit for r in traj.reports if r.energy_audit is not None]
    if leds:
        tl = t[1 : len(leds) + 1]
        fig, ax = plt.subplots(figsize=(6.4, 3.6))
        ax.plot(tl, [e.lyapunov for e in leds], label="Lyapunov functional")
        ax.plot(tl, np.cumsum([e.dissipation for e in leds]), label="cumulative dissipation")
        ax.plot(tl, np.cumsum([e.work for e in leds]), label="cumulative work")
        ax.set_xlabel("t")
        ax.legend(loc="best", fontsize=8)
        out.append(_save(fig, outdir / "energy_ledger.png"))

    last = snaps[-1]
    fig, (a0, a1) = plt.subplots(2, 1, figsize=(6.4, 6.0), sharex=True)
    for j, name in enumerate(_PHASES):
        a0.plot(x, last.beta[:, j], label=name)
    a0.set_ylabel(f"fractions at t = {last.t:.3g}")
    a0.legend(loc="best", fontsize=8)
    a1.plot(x, last.u, label="u")
    xm = 0.5 * (x[1:] + x[:-1])
    a1.step(xm, last.p, where="mid", label="p")
    a1.set_xlabel("x")
    a1.legend(loc="best", fontsize=8)
    out.append(_save(fig, outdir / "final_profiles.png"))
    return out


def plot_sweep(result, outdir) -> Path | None:
    """Log-log residuals against epsilon; series with nonpositive entries are left out."""
    eps = np.asarray(result.epsilons)
    series = [
        (result.constraint_residuals, "o-", "max dist(beta, C)"),
        (result.mass_residuals, "s-", "mass residual"),
        (result.pressure_norms, "^--", "pressure norm"),
    ]
    series = [(np.asarray(v), st, lab) for v, st, lab in series if np.all(np.asarray(v) > 0)]
    if not series:
        return None
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for v, style, label in series:
        ax.loglog(eps, v, style, label=label)
    ref = series[0][0]
    ax.loglog(eps, eps * (ref[0] / eps[0]), ":", color="grey", label="slope 1")
    ax.set_xlabel("epsilon")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, Path(outdir) / "epsilon_sweep.png")


def plot_dependence(rows, outdir) -> Path:
    d = np.array([r.delta for r in rows])
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.loglog(d, [r.lhs for r in rows], "o-", label="solution difference")
    ax.loglog(d, [r.rhs for r in rows], "s--", label="data difference")
    ax.set_xlabel("perturbation size")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, Path(outdir) / "dependence.png")
