"""Command-line interface.

Subcommands: ``dual`` (centralized price iteration), ``fastcontrol``
(distributed simulation over the anycast control channel), ``greedy``
(ODE integration of the feedback heuristic), ``stability`` (polytope
check, fixed points and verdict) and ``sweep`` (seeded Monte-Carlo
experiment grid).  Every run writes a CSV; ``--figures DIR`` additionally
renders matplotlib figures next to it.  Exit code 2 signals a component
error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dual as dual_mod
from . import experiments as exp_mod
from . import fastcontrol as fc_mod
from . import greedy as greedy_mod
from .errors import AnycastLBError
from .model import SystemInstance, load_instance


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def write_dual_csv(report, path, n: int) -> None:
    cols = ["k", "cost", "dual_obj", "grad_norm"]
    cols += [f"mu_{i}" for i in range(n)] + [f"x_{i}" for i in range(n)]
    if report.R is not None:
        cols += [f"R_{i}" for i in range(n)] + ["overhead"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(report.iterations):
            row = [str(k), _fmt(report.cost[k]), _fmt(report.dual_obj[k]),
                   _fmt(report.grad_norm[k])]
            row += [_fmt(v) for v in report.mu[k]]
            row += [_fmt(v) for v in report.x[k]]
            if report.R is not None:
                row += [_fmt(v) for v in report.R[k]]
                row.append(_fmt(report.overhead[k]))
            fh.write(",".join(row) + "\n")


def write_trajectory_csv(traj, path, n: int) -> None:
    cols = ["t"] + [f"x_{i}" for i in range(n)] + [f"S_{i}" for i in range(n)]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(traj.t)):
            row = [_fmt(traj.t[k])]
            row += [_fmt(v) for v in traj.x[k]]
            row += [_fmt(v) for v in traj.S[k]]
            fh.write(",".join(row) + "\n")


def _policy(instance: SystemInstance, args) -> dual_mod.StepSizePolicy:
    if args.alpha is not None:
        return dual_mod.StepSizePolicy.constant(args.alpha)
    return dual_mod.StepSizePolicy.from_epsilon(args.epsilon, instance)


def _render(paths: list[str]) -> None:
    for p in paths:
        print(f"wrote {p}")


def cmd_dual(args) -> int:
    instance = load_instance(args.instance)
    report = dual_mod.run_dual(instance, _policy(instance, args),
                               max_iters=args.max_iters, stop_tol=args.stop_tol)
    write_dual_csv(report, args.out, instance.n)
    print(f"wrote {args.out}")
    print(f"iterations={report.iterations} best_cost={report.best_cost:.6g} "
          f"best_dual={report.best_dual:.6g} converged={report.converged}")
    if args.figures:
        from . import plots
        _render(plots.plot_convergence(report, plots.figure_stem(args.out, args.figures)))
    return 0


def cmd_fastcontrol(args) -> int:
    instance = load_instance(args.instance)
    report = fc_mod.run_distributed(
        instance, _policy(instance, args), gamma=args.gamma,
        max_iters=args.max_iters, stop_tol=args.stop_tol,
        mode=args.mode, scale=args.scale, seed=args.seed)
    write_dual_csv(report, args.out, instance.n)
    print(f"wrote {args.out}")
    print(f"iterations={report.iterations} best_cost={report.best_cost:.6g} "
          f"overhead_total={report.overhead_total:.6g} converged={report.converged}")
    if args.figures:
        from . import plots
        _render(plots.plot_convergence(report, plots.figure_stem(args.out, args.figures)))
    return 0


def cmd_greedy(args) -> int:
    instance = load_instance(args.instance)
    if args.x0 == "random":
        rng = np.random.default_rng(args.seed)
        x0 = rng.uniform(0.05, 0.95, size=instance.n)
    else:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    config = greedy_mod.OdeConfig(
        beta_sens=args.beta_sens, dt=args.dt, horizon=args.horizon,
        steady_tol=args.steady_tol, record_every=args.record_every)
    traj = greedy_mod.integrate(instance, config, x0)
    write_trajectory_csv(traj, args.out, instance.n)
    print(f"wrote {args.out}")
    overloaded = (greedy_mod.detect_uncontrollable_overload(traj, instance.T)
                  if traj.steady else [])
    print(f"steady={traj.steady} t_end={traj.t[-1]:.6g} residual={traj.residual:.3g} "
          f"uncontrollably_overloaded={overloaded}")
    if args.figures:
        from . import plots
        _render(plots.plot_trajectory(traj, instance,
                                      plots.figure_stem(args.out, args.figures)))
    return 0


def cmd_stability(args) -> int:
    instance = load_instance(args.instance)
    verdict = greedy_mod.stability_report(instance)
    if args.json:
        payload = {
            "verdict": verdict.verdict,
            "in_polytope": [bool(v) for v in verdict.in_polytope],
            "uncontrollably_overloaded": [bool(v) for v in
                                          verdict.uncontrollably_overloaded],
            "fixed_points": [
                {
                    "x": [float(v) for v in fp.x],
                    "loads": [float(v) for v in fp.loads],
                    "classification": fp.classification,
                    "eigenvalues": [[ev.real, ev.imag] for ev in fp.eigenvalues],
                }
                for fp in verdict.fixed_points
            ],
        }
        print(json.dumps(payload, indent=2))
        return 0
    print("node  in_polytope  uncontrollably_overloaded")
    for i in range(instance.n):
        print(f"{i:4d}  {str(bool(verdict.in_polytope[i])):11s}  "
              f"{bool(verdict.uncontrollably_overloaded[i])}")
    print("\nfixed points:")
    for fp in verdict.fixed_points:
        eigs = ", ".join(f"{ev.real:.4g}{ev.imag:+.4g}j" for ev in fp.eigenvalues)
        print(f"  x={np.array2string(fp.x, precision=4)}  {fp.classification:8s}  "
              f"eigenvalues: {eigs}")
    print(f"\nverdict: {verdict.verdict}")
    return 0


def cmd_sweep(args) -> int:
    if args.config:
        config = exp_mod.config_from_json(args.config)
    else:
        config = exp_mod.ExperimentConfig()
    stats, _ = exp_mod.run_sweep(config, out_csv=args.out)
    print(f"wrote {args.out}")
    for s in stats:
        print(f"A_bar={s.a_bar:<6g} {s.algorithm:11s} mean={s.mean:<12.6g} "
              f"std={s.std:<12.6g} n={s.n_trials} infeasible={s.n_infeasible}")
    if args.figures:
        from . import plots
        _render(plots.plot_sweep(stats, plots.figure_stem(args.out, args.figures)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anycastlb",
        description="Load-management algorithms for two-layer anycast CDNs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dual_args(p):
        p.add_argument("--instance", required=True, help="instance JSON file")
        p.add_argument("--epsilon", type=float, default=0.1,
                       help="target optimality neighborhood (sets the step size)")
        p.add_argument("--alpha", type=float, default=None,
                       help="explicit constant step size (overrides --epsilon)")
        p.add_argument("--max-iters", type=int, default=20000)
        p.add_argument("--stop-tol", type=float, default=0.0,
                       help="stop once best cost improves less than this per 100 iterations")
        p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--figures", default=None, help="directory for rendered figures")

    p = sub.add_parser("dual", help="centralized dual price iteration")
    add_dual_args(p)
    p.set_defaults(func=cmd_dual)

    p = sub.add_parser("fastcontrol", help="distributed simulation with control packets")
    add_dual_args(p)
    p.add_argument("--gamma", type=float, default=1.0,
                   help="control-packet generation rate parameter")
    p.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    p.add_argument("--scale", type=float, default=1e6,
                   help="packets per unit rate in sampled mode")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fastcontrol)

    p = sub.add_parser("greedy", help="integrate the greedy feedback dynamics")
    p.add_argument("--instance", required=True)
    p.add_argument("--x0", default="random",
                   help='comma-separated start point or "random" (interior)')
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--horizon", type=float, default=1e4)
    p.add_argument("--steady-tol", type=float, default=1e-8)
    p.add_argument("--beta-sens", type=float, default=1.0)
    p.add_argument("--record-every", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--figures", default=None)
    p.set_defaults(func=cmd_greedy)

    p = sub.add_parser("stability", help="polytope check, fixed points and verdict")
    p.add_argument("--instance", required=True)
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep", help="seeded experiment grid")
    p.add_argument("--config", default=None,
                   help="experiment config JSON (defaults to the shipped settings)")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", default=None)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AnycastLBError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
