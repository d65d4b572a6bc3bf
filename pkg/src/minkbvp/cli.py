"""Command line entry point: ``minkbvp {solve,branch,certify,reproduce-figure}``.

Exit codes: 0 success, 1 no solution found, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .certificates import (ConstantsFailure, brouwer_degree_f_sharp, compute_constants, probe_H1,
                           probe_H2, probe_H3)
from .config import ConfigError, ProblemConfig, load_config
from .continuation import ContinuationError, detect_folds, trace_branch
from .figures import BRANCH_HEADER, FigureError, branch_rows, reproduce_figure, write_csv
from .nonlinearity import NonlinearityError
from .phase_flow import IntegrationError
from .shooting import BoundaryCondition, periodic_guesses, solve_neumann, solve_periodic
from .weight import WeightError, mean_value

EXIT_OK, EXIT_NO_SOLUTION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SOLUTION_HEADER = ["index", "u0", "v0", "sup_norm", "bc_residual", "weak_residual", "min_u"]


def _out_dir(args, cfg: ProblemConfig) -> Path:
    if args.out:
        return Path(args.out)
    d = Path(cfg.output.directory)
    if not d.is_absolute() and cfg.base_dir:
        d = Path(cfg.base_dir) / d
    return d


def _problem(cfg: ProblemConfig, args):
    kappa = getattr(args, "kappa", None)
    if kappa is not None and cfg.nonlinearity.kind != "power_exp":
        raise ConfigError("--kappa only applies to power_exp nonlinearities", key="kappa")
    return cfg.build_problem(lam=getattr(args, "lam", None), kappa=kappa)


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    prob = _problem(cfg, args)
    if prob.bc is BoundaryCondition.NEUMANN:
        sols = solve_neumann(prob, cfg.scan)
    else:
        seeds = solve_neumann(prob.with_(bc=BoundaryCondition.NEUMANN), cfg.scan)
        sols = solve_periodic(prob, periodic_guesses(prob, cfg.scan[1], neumann=seeds),
                              positive_only=True)
    out = _out_dir(args, cfg)
    rows = [(k, s.u0, s.v0, s.sup_norm, s.certificate.bc_residual, s.certificate.weak_residual,
             s.certificate.min_u) for k, s in enumerate(sols)]
    path = write_csv(out / "solutions.csv", SOLUTION_HEADER, rows)
    if args.trajectories:
        for k, s in enumerate(sols):
            write_csv(out / f"solution_{k:03d}.csv", ["t", "u", "uprime", "v"],
                      s.trajectory.to_csv_rows(cfg.output.samples))
    print(f"{len(sols)} solution(s) written to {path}")
    for c, msg in sols.failures:
        print(f"warning: c={c!r}: {msg}", file=sys.stderr)
    return EXIT_OK if sols else EXIT_NO_SOLUTION


def cmd_branch(args) -> int:
    cfg = load_config(args.config)
    name = {"lambda": "lam", "kappa": "kappa"}[args.param]
    p_start = args.start
    prob = cfg.build_problem(**({"lam": p_start} if name == "lam" else {"kappa": p_start}))
    if prob.bc is not BoundaryCondition.NEUMANN:
        raise ConfigError("branch tracing supports neumann problems", key="bc")
    sols = solve_neumann(prob, cfg.scan)
    if not sols:
        print(f"no positive solution at {args.param} = {p_start}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    if args.start_index >= len(sols):
        print(f"only {len(sols)} solution(s) at the start value", file=sys.stderr)
        return EXIT_NO_SOLUTION
    b = trace_branch(prob, name, (p_start, sols[args.start_index]), (args.min, args.max),
                     args.step or cfg.solver.step, direction=args.direction,
                     sup_ceiling=cfg.solver.sup_ceiling)
    out = _out_dir(args, cfg)
    path = write_csv(out / "branch.csv", BRANCH_HEADER, branch_rows(b))
    print(f"{len(b.points)} points written to {path} ({b.stop_reason})")
    for param, u0 in detect_folds(b):
        print(f"fold: {args.param} = {param!r}, u0 = {u0!r}")
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    prob = _problem(cfg, args)
    lines: list[tuple[str, object]] = []
    consts = compute_constants(prob.weight, prob.nonlin.with_scale(prob.lam), r=args.r)
    lines += consts.items()
    lines.append(("constants_status", "failed" if isinstance(consts, ConstantsFailure) else "ok"))
    lines.append(("mean_value", mean_value(prob.weight)))
    try:
        lines.append(("degree_f_sharp", brouwer_degree_f_sharp(prob.weight, prob.nonlin, args.r)))
    except ValueError as exc:
        lines.append(("degree_f_sharp", f"undefined ({exc})"))
    if args.probes:
        thetas = [k / 10 for k in range(1, 11)]
        h1 = probe_H1(prob, args.r, thetas, resolution=args.resolution)
        lines += [("probe_H1", h1.summary), ("probe_H1_passed", h1.passed)]
        if not isinstance(consts, ConstantsFailure) and consts.alpha0 < float("inf"):
            alphas = [consts.alpha0 * k / 19 for k in range(20)]
            h2 = probe_H2(prob, consts.R, alphas, resolution=args.resolution)
            h3 = probe_H3(prob, consts.R, consts.alpha0, resolution=args.resolution)
            lines += [("probe_H2", h2.summary), ("probe_H2_passed", h2.passed),
                      ("probe_H3", h3.summary), ("probe_H3_passed", h3.passed)]
    text = "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n" for k, v in lines)
    sys.stdout.write(text)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_figure(args) -> int:
    res = reproduce_figure(args.figure, args.out, args.negative_weight)
    for f in res.files:
        print(f"wrote {f}")
    for c in res.comparisons:
        print(f"{c.label} @ {c.x!r}: reference {c.reference!r}, computed {c.computed!r}, "
              f"rel error {c.rel_error:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="minkbvp", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="find Neumann or periodic solutions")
    s.add_argument("--config", required=True)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--kappa", type=float)
    s.add_argument("--out")
    s.add_argument("--trajectories", action="store_true", help="also write one CSV per solution")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("branch", help="trace a solution branch")
    b.add_argument("--config", required=True)
    b.add_argument("--param", choices=("lambda", "kappa"), required=True)
    b.add_argument("--start", type=float, required=True, help="parameter value to start from")
    b.add_argument("--min", type=float, required=True)
    b.add_argument("--max", type=float, required=True)
    b.add_argument("--step", type=float)
    b.add_argument("--direction", type=int, choices=(-1, 1), default=-1)
    b.add_argument("--start-index", type=int, default=0, help="which start solution (by u0)")
    b.add_argument("--out")
    b.set_defaults(func=cmd_branch)

    c = sub.add_parser("certify", help="constants, degree and homotopy probes")
    c.add_argument("--config", required=True)
    c.add_argument("--lambda", dest="lam", type=float)
    c.add_argument("--kappa", type=float)
    c.add_argument("--r", type=float, default=1e-3)
    c.add_argument("--probes", action="store_true", help="run the falsification probes (slow)")
    c.add_argument("--resolution", type=int, default=200)
    c.add_argument("--report", help="also write the key = value report here")
    c.set_defaults(func=cmd_certify)

    f = sub.add_parser("reproduce-figure", help="regenerate the data of figure 1, 2 or 3")
    f.add_argument("figure", type=int, choices=(1, 2, 3))
    f.add_argument("--out", default="figures")
    f.add_argument("--negative-weight", type=float,
                   help="value of a(t) on the negativity interval (default per figure)")
    f.set_defaults(func=cmd_figure)
    return ap


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, WeightError, NonlinearityError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, ContinuationError, FigureError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
