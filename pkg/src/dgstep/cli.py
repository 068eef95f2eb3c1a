"""Command line entry point.

    dgstep run --problem ode --k 1 --nt 8 --out trace.csv
    dgstep converge --problem ode --k 2 --converge-levels 2..10 --out rates.csv
"""

import argparse
import csv
import logging
import math
import sys

from .experiments import DGRAD_NAMES, ConfigError, RunConfig, convergence_study, fitted_orders, run_case, trace_rows
from .stepper import SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _fmt(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "" if math.isnan(value) else format(value, ".17g")
    return str(value)


def write_csv(rows, fieldnames, out):
    """RFC 4180 CSV with 17 significant digits; ``out`` is a path or '-'."""
    handle = sys.stdout if out in (None, "-") else open(out, "w", newline="")
    try:
        writer = csv.writer(handle, lineterminator="\r\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row[f]) for f in fieldnames])
    finally:
        if handle is not sys.stdout:
            handle.close()


def parse_levels(text):
    """'2..6' -> [2, 3, 4, 5, 6]; '2,4,5' -> [2, 4, 5]."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad level range {text!r}") from None


def _add_common(p):
    p.add_argument("--problem", choices=("ode", "kdv"), default="ode")
    p.add_argument("--k", type=int, default=1, help="polynomial degree in time")
    p.add_argument("--T", type=float, default=None, help="final time (ODE 20, KdV one period)")
    p.add_argument("--u0", type=float, default=1e-5, help="ODE initial value")
    p.add_argument("--nx", type=int, default=32, help="KdV cell count")
    p.add_argument("--l", type=int, default=None, help="KdV element degree (default 2k)")
    p.add_argument("--m", type=float, default=math.sqrt(0.9), dest="modulus", help="cnoidal elliptic modulus")
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--dgrad", choices=sorted(DGRAD_NAMES), default=None)
    p.add_argument("--newton-tol", type=float, default=1e-12)
    p.add_argument("--rel-tol", type=float, default=None, help="also require |R| <= rel_tol |x|")
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--jacobian", choices=("finite_difference", "reuse_per_interval"), default="finite_difference")
    p.add_argument("--quad", type=int, default=None, help="Gauss points per slab (default 2k+1)")
    p.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="dgstep", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="single run with an energy trace")
    _add_common(run)
    run.add_argument("--nt", type=int, default=None, help="number of time steps (ODE 8, KdV nx)")
    run.add_argument("--coords-stride", type=int, default=0, help="KdV: write every n-th coordinate")
    conv = sub.add_parser("converge", help="refinement study with observed orders")
    _add_common(conv)
    conv.add_argument("--converge-levels", default="2..6", help="levels i with N_t = 2^i (KdV also N_x)")
    conv.add_argument("--jobs", type=int, default=1)
    return parser


def _config(args, nt):
    return RunConfig(
        problem=args.problem,
        k=args.k,
        nt=nt,
        T=args.T,
        u0=args.u0,
        nx=args.nx,
        l=args.l,
        modulus=args.modulus,
        kappa=args.kappa,
        alpha=args.alpha,
        dgrad=args.dgrad,
        newton_tol=args.newton_tol,
        rel_tol=args.rel_tol,
        max_iters=args.max_iters,
        jacobian=args.jacobian,
        quad=args.quad,
    )


def cmd_run(args):
    nt = args.nt if args.nt is not None else (8 if args.problem == "ode" else args.nx)
    run = run_case(_config(args, nt))
    rows = trace_rows(run, args.coords_stride)
    write_csv(rows, list(rows[0]), args.out)
    return EXIT_OK


CONVERGENCE_FIELDS = [
    "level",
    "tau",
    "nodal_error",
    "interior_error",
    "nodal_order",
    "interior_order",
    "below_floor",
    "interior_below_floor",
]


def cmd_converge(args):
    levels = parse_levels(args.converge_levels)
    rows = convergence_study(_config(args, 1), levels, jobs=args.jobs)
    write_csv([vars(r) for r in rows], CONVERGENCE_FIELDS, args.out)
    (nodal, nodal_lv), (interior, interior_lv) = fitted_orders(rows, window=min(5, len(rows)))
    print(f"least-squares nodal order {nodal:.3f} over levels {nodal_lv}", file=sys.stderr)
    if interior_lv:
        print(f"least-squares interior order {interior:.3f} over levels {interior_lv}", file=sys.stderr)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = cmd_run if args.command == "run" else cmd_converge
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"dgstep: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        where = f" on interval {exc.interval}" if exc.interval is not None else ""
        print(f"dgstep: solver failed{where}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
