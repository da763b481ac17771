"""Command-line front end: ``accelfd {coeffs,check,converge,solve}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import OUT_ENV, load_config
from .errors import AccelFDError
from .harness import run_convergence, solve_single
from .richardson import coefficients, format_table
from .stencil import consistency_check, monomial_residual, parabolicity
from .testbed import get_problem

log = logging.getLogger("accelfd")


def cmd_coeffs(args) -> int:
    print(format_table(coefficients(args.k, args.power_step)))
    return 0


def check_report(name: str, n: int) -> dict:
    """Consistency residuals, quartic probe, parabolicity and monotonicity."""
    problem = get_problem(name)
    grid = problem.grid(n)
    report = consistency_check(problem.spec, problem.continuous, grid, degree=2)
    quartic = None
    if grid.dim == 1 and problem.spec.symmetric and problem.spec.has_constant_coefficients() and not problem.spec.b:
        quartic = monomial_residual(problem.spec, problem.continuous, grid, (4,) * grid.dim)
    return {
        "problem": problem.name,
        "grid": grid,
        "consistency": report,
        "quartic": quartic,
        "a_total": [v for v in problem.spec.a.values()] if quartic is not None else [],
        "parabolicity": parabolicity(problem.continuous, grid),
        "monotonicity_violations": problem.spec.monotonicity_violations(grid),
    }


def cmd_check(args) -> int:
    rep = check_report(args.problem, args.n)
    grid = rep["grid"]
    print(f"problem: {rep['problem']}  N={grid.extent[0]}  h={grid.spacing!r}")
    print("operator,exponents,max_abs_residual,max_scaled_residual")
    for r in rep["consistency"].residuals:
        print(f"{r.operator},{'/'.join(map(str, r.exponents))},{r.max_abs:.3e},{r.max_scaled:.3e}")
    if rep["quartic"] is not None:
        q = rep["quartic"]
        expected = 2 * sum(rep["a_total"]) * grid.spacing**2
        print(f"quartic probe x^4: max residual {q.max_abs:.6e} (2 a h^2 = {expected:.6e})")
    par = rep["parabolicity"]
    print(f"parabolicity: {par.status} (min eigenvalue of a - sigma sigma^T/2 = {par.min_eigenvalue:.3e})")
    print(f"monotonicity violations: {len(rep['monotonicity_violations'])}")
    return 0


def _configure(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "paths", None) is not None:
        cfg = replace(cfg, paths=args.paths)
    if getattr(args, "k", None) is not None:
        cfg = replace(cfg, k=args.k)
    if args.power_step is not None:
        cfg = replace(cfg, power_step=args.power_step)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg


def cmd_converge(args) -> int:
    cfg = _configure(args)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = run_convergence(cfg)
    csv_path = out / f"{cfg.name}.csv"
    csv_path.write_text(table.to_csv(), encoding="utf-8")
    (out / f"{cfg.name}.meta.json").write_text(table.metadata_text(), encoding="utf-8")
    if args.plot_data:
        (out / f"{cfg.name}.plot.csv").write_text(table.plot_data(), encoding="utf-8")
    print(f"{cfg.problem}: k={cfg.k} power_step={cfg.power_step} paths={cfg.paths} seed={cfg.seed}")
    print(f"{'h':>12} {'rms_sup_error':>14} {'local_order':>12}")
    for row in table.rows:
        lo = "" if row.local_order is None else f"{row.local_order:.3f}"
        print(f"{row.h:12.6g} {row.rms_sup_error:14.6e} {lo:>12}")
    fit = table.fit
    print("fitted slope: exact (all errors zero)" if fit.exact else f"fitted slope: {fit.slope:.4f}")
    print(f"wrote {csv_path}")
    return 0


def _parse_accelerate(value: str) -> int:
    value = value.strip()
    if value.startswith("k="):
        value = value[2:]
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected k=<int>, got {value!r}") from None


def cmd_solve(args) -> int:
    cfg = _configure(args)
    field = solve_single(cfg, args.path_index, args.accelerate)
    grid = field.grid
    coords = [c.reshape(-1) for c in grid.coordinates()]
    names = ["x", "y", "z"][: grid.dim] if grid.dim <= 3 else [f"x{i}" for i in range(grid.dim)]
    lines = [",".join(names + ["value"])]
    for i in range(grid.size):
        lines.append(",".join([repr(float(c[i])) for c in coords] + [repr(float(np.real(field.values[i])))]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accelfd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", help="print the extrapolation weight table")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--power-step", type=int, default=2, choices=(1, 2))
    p.set_defaults(func=cmd_coeffs)

    p = sub.add_parser("check", help="consistency and parabolicity report for a test problem")
    p.add_argument("problem")
    p.add_argument("--n", type=int, default=32)
    p.set_defaults(func=cmd_check)

    for name, func, helptext in (
        ("converge", cmd_converge, "run a convergence experiment"),
        ("solve", cmd_solve, "dump the terminal field of one path"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--power-step", type=int, choices=(1, 2))
        p.add_argument("--out", help=f"output location (default: config, then ${OUT_ENV})")
        if name == "converge":
            p.add_argument("--paths", type=int)
            p.add_argument("--k", type=int)
            p.add_argument("--workers", type=int)
            p.add_argument("--plot-data", action="store_true")
        else:
            p.add_argument("--path-index", type=int, default=0)
            p.add_argument("--accelerate", type=_parse_accelerate, metavar="k=K")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (AccelFDError, ValueError, OSError) as exc:
        print(f"accelfd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
