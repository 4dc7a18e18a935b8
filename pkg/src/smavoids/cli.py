"""Command-line entry point ``smavoids``.

Exit status: 0 success, 1 invalid input or failed check, 2 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from .diagnostics import (
    SweepError,
    check_sweep_epsilons,
    continuous_dependence_experiment,
    energy_audit,
    epsilon_sweep,
)
from .scenario import ScenarioError, load_scenario
from .solver import SolverError, run_simulation
from .storage import (
    TrajectoryIOError,
    default_output_dir,
    read_trajectory,
    write_table,
    write_trajectory,
)

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the validation status instead of argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        v = 0
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smavoids", description="Shape memory alloy phase transitions with voids in a 1D bar.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate a scenario and write its trajectory")
    r.add_argument("scenario", type=Path)
    r.add_argument("--out", type=Path, help="output directory (default: run_<scenario name>)")
    r.add_argument("--stride", type=_positive_int, default=1, help="keep every N-th snapshot")
    r.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    a = sub.add_parser("audit", help="recompute the energy ledger of a stored trajectory")
    a.add_argument("trajectory", type=Path)
    a.add_argument("--rel-tol", type=float, default=1e-8)

    s = sub.add_parser("sweep-epsilon", help="rerun a scenario over several epsilons")
    s.add_argument("scenario", type=Path)
    s.add_argument("--epsilons", type=_float_list, required=True)
    s.add_argument("--out", type=Path)
    s.add_argument("--workers", type=int, default=None, help="parallel runs (default: one per epsilon)")
    s.add_argument("--no-plots", action="store_true")

    d = sub.add_parser("depend", help="continuous dependence on the initial temperature")
    d.add_argument("scenario", type=Path)
    d.add_argument("--deltas", type=_float_list, required=True)
    d.add_argument("--kind", choices=("w0", "F"), default="w0", help="perturbed datum")
    d.add_argument("--out", type=Path)
    d.add_argument("--workers", type=int, default=None)
    d.add_argument("--no-plots", action="store_true")

    sub.add_parser("check", help="run the built-in property suite")
    return p


def _load(path: Path):
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scen = load_scenario(path)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        return scen
    except FileNotFoundError:
        print(f"error: scenario file {path} not found", file=sys.stderr)
    except ScenarioError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
    return None


def _outdir(args, prefix: str) -> Path:
    return args.out if args.out is not None else default_output_dir(f"{prefix}_{args.scenario.stem}")


def _cmd_run(args) -> int:
    scen = _load(args.scenario)
    if scen is None:
        return EXIT_INVALID
    out = _outdir(args, "run")
    traj = run_simulation(scen)
    files = write_trajectory(traj, out, stride=args.stride)
    if not args.no_plots and len(traj.snapshots) > 1:
        from .plotting import plot_run

        files += plot_run(traj, out)
    print(f"wrote {len(files)} files to {out}")
    if not traj.completed:
        print(f"solver failure: {traj.failure}", file=sys.stderr)
        print(f"failing step report: {out / 'failed_step.yaml'}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"{len(traj.reports)} steps to t = {traj.snapshots[-1].t:.6g}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    try:
        traj, meta = read_trajectory(args.trajectory)
    except (TrajectoryIOError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if meta.get("stride", 1) != 1:
        print("error: audit needs every step; rerun with --stride 1", file=sys.stderr)
        return EXIT_INVALID
    if len(traj.snapshots) < 2:
        print("error: trajectory has no steps", file=sys.stderr)
        return EXIT_INVALID
    led = energy_audit(traj, rel_tol=args.rel_tol)
    rows = [(led.t[n + 1], s.lyapunov, s.dissipation, s.work, s.balance) for n, s in enumerate(led.steps)]
    write_table(args.trajectory / "audit.csv", ("t", "lyapunov", "dissipation", "work", "balance"), rows)
    v = led.violations
    print(f"{len(led.steps)} steps audited, worst relative balance {led.worst_relative_violation:.3e}, "
          f"{len(v)} violations above {args.rel_tol:g}")
    if v:
        print("violating steps: " + ", ".join(map(str, v[:20])) + (" ..." if len(v) > 20 else ""))
        return EXIT_INVALID
    return EXIT_OK


def _cmd_sweep(args) -> int:
    try:
        check_sweep_epsilons(args.epsilons)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    scen = _load(args.scenario)
    if scen is None:
        return EXIT_INVALID
    out = _outdir(args, "sweep")
    out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    try:
        res = epsilon_sweep(scen, args.epsilons, workers=args.workers)
    except SweepError as exc:
        res, status = exc.partial, EXIT_SOLVER
        print(f"solver failure: {exc}", file=sys.stderr)
    cols = ("epsilon", "dt", "constraint_residual", "mass_residual", "pressure_norm", "max_abs_w")
    rows = zip(res.epsilons, res.dts, res.constraint_residuals, res.mass_residuals, res.pressure_norms, res.max_abs_w)
    write_table(out / "sweep.csv", cols, rows)
    for name, order in res.fitted_orders.items():
        print(f"fitted order of {name}: {order:.3f}")
    if res.pressure_norms:
        print(f"pressure norm max/min: {res.pressure_spread:.3f}")
    if not args.no_plots and len(res.epsilons) >= 2:
        from .plotting import plot_sweep

        plot_sweep(res, out)
    print(f"results in {out}")
    return status


def _cmd_depend(args) -> int:
    if any(d < 0 for d in args.deltas):
        print("error: perturbation sizes must be nonnegative", file=sys.stderr)
        return EXIT_INVALID
    scen = _load(args.scenario)
    if scen is None:
        return EXIT_INVALID
    out = _outdir(args, "depend")
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows, ratios = continuous_dependence_experiment(scen, args.deltas, kind=args.kind, workers=args.workers)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_table(out / "dependence.csv", ("delta", "lhs", "rhs"), [(r.delta, r.lhs, r.rhs) for r in rows])
    write_table(out / "dependence_ratios.csv", ("delta_a", "delta_b", "lhs_ratio", "rhs_ratio"),
                [(a.delta, b.delta, lr, rr) for (a, b), (lr, rr) in zip(zip(rows, rows[1:]), ratios)])
    for r in rows:
        print(f"delta = {r.delta:g}: lhs {r.lhs:.6e}, rhs {r.rhs:.6e}")
    for (a, b), (lr, rr) in zip(zip(rows, rows[1:]), ratios):
        print(f"{a.delta:g} -> {b.delta:g}: lhs ratio {lr:.4g}, rhs ratio {rr:.4g}")
    if not args.no_plots and len(rows) >= 2 and all(r.delta > 0 and r.lhs > 0 for r in rows):
        from .plotting import plot_dependence

        plot_dependence(rows, out)
    print(f"results in {out}")
    return EXIT_OK


def _cmd_check(args) -> int:
    from .verify import run_checks

    results = run_checks()
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail} ({r.seconds:.2f} s)")
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} properties passed")
    return EXIT_OK if n_ok == len(results) else EXIT_INVALID


_COMMANDS = {
    "run": _cmd_run,
    "audit": _cmd_audit,
    "sweep-epsilon": _cmd_sweep,
    "depend": _cmd_depend,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except TrajectoryIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
