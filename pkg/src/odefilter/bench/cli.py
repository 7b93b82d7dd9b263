"""``odefilter-bench``: work-precision sweeps and conditioning diagnostics.

Subcommands:

``wp``          work-precision / convergence sweep over orders and tolerances (or fixed steps)
``cond-table``  process-noise conditioning per coordinate system
``cond-trace``  per-step condition numbers of the predicted covariance factors
``stiff``       van der Pol run emitting the accepted step sizes

Output is CSV (default) or JSON, on stdout unless ``--out`` is given.
Exit status: 0 on success, 1 if any cell or run failed, 2 on invalid flags.
"""

import argparse
import sys

from ..errors import OdeFilterError
from ..filter import SolverConfig, solve
from ..problems import PROBLEMS
from . import experiments
from .records import BenchmarkRecord, CondRow, StepRow, TraceRow, emit

NORDSIECK_NOTE = (
    "Nordsieck coordinates scale the derivative-i block by h^i/i!; the table uses "
    "h^(i-nu)/i!, the same scaling up to a common factor, which changes neither the "
    "condition number nor the element ratio. Trace values are condition numbers of "
    "the Cholesky factors (square roots of the covariance condition numbers)."
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _list_of(kind, name):
    def parse(text):
        try:
            values = [kind(item) for item in text.split(",") if item.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} expects a comma-separated list, got {text!r}") from None
        if not values:
            raise argparse.ArgumentTypeError(f"{name} must not be empty")
        return values

    return parse


def _positive(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _output_args(parser):
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--out", metavar="PATH", help="output file (default: stdout)")


def _problem_args(parser, default="lotka"):
    parser.add_argument("--problem", choices=sorted(PROBLEMS), default=default)
    parser.add_argument("--mu", type=_positive, help="van der Pol stiffness parameter")
    parser.add_argument("--t1", type=_positive, help="override the final time")


def build_parser():
    parser = _Parser(prog="odefilter-bench", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    wp = sub.add_parser("wp", help="work-precision sweep")
    _problem_args(wp)
    wp.add_argument("--method", choices=("ek0", "ek1"), default="ek1")
    wp.add_argument("--order", type=_list_of(int, "--order"), required=True, metavar="N[,N...]")
    sweep = wp.add_mutually_exclusive_group(required=True)
    sweep.add_argument("--tol", type=_list_of(float, "--tol"), metavar="X[,X...]")
    sweep.add_argument("--fixed-step", type=_list_of(float, "--fixed-step"), metavar="H[,H...]")
    wp.add_argument("--no-rmse", action="store_true", help="skip smoothing and the RMSE column")
    _output_args(wp)

    table = sub.add_parser("cond-table", help="process-noise conditioning", description=NORDSIECK_NOTE)
    table.add_argument("--order", type=_list_of(int, "--order"), default=[1, 3, 5, 7, 9, 11])
    table.add_argument("--h", type=_positive, default=1e-4)
    _output_args(table)

    trace = sub.add_parser("cond-trace", help="per-step factor conditioning", description=NORDSIECK_NOTE)
    _problem_args(trace)
    trace.add_argument("--method", choices=("ek0", "ek1"), default="ek1")
    trace.add_argument("--order", type=int, required=True, metavar="N")
    trace.add_argument("--tol", type=_positive, default=1e-4)
    _output_args(trace)

    stiff = sub.add_parser("stiff", help="van der Pol step-size series")
    _problem_args(stiff, default="vanderpol")
    stiff.add_argument("--method", choices=("ek0", "ek1"), default="ek1")
    stiff.add_argument("--order", type=int, default=5, metavar="N")
    stiff.add_argument("--tol", type=_positive, default=1e-9)
    stiff.add_argument("--max-steps", type=int, default=10**6)
    _output_args(stiff)
    return parser


def _validate(parser, args):
    orders = args.order if isinstance(args.order, list) else [args.order]
    if any(nu < 1 for nu in orders):
        parser.error("--order values must be >= 1")
    for name in ("tol", "fixed_step"):
        values = getattr(args, name, None)
        values = values if isinstance(values, list) else [values] if values is not None else []
        if any(not v > 0 for v in values):
            parser.error(f"--{name.replace('_', '-')} values must be positive")
    if getattr(args, "mu", None) is not None and args.problem != "vanderpol":
        parser.error("--mu only applies to --problem vanderpol")
    if args.command == "wp" and args.problem == "vanderpol" and not args.no_rmse:
        args.no_rmse = True


def _write(rows, args, row_type):
    text = emit(rows, args.format, args.out, row_type=row_type)
    if args.out is None:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        if args.command == "cond-table":
            _write(experiments.cond_diagnostics(args.order, args.h), args, CondRow)
            return 0

        problem = experiments.make_problem(args.problem, mu=args.mu, t1=args.t1)
        if args.command == "wp":
            rows = experiments.run_work_precision(
                problem,
                args.method,
                args.order,
                tol_list=args.tol,
                h_list=args.fixed_step,
                compute_rmse=not args.no_rmse,
            )
            _write(rows, args, BenchmarkRecord)
            for row in rows:
                if not row.ok:
                    print(f"failed cell nu={row.nu}: {row.failure}", file=sys.stderr)
            return 0 if all(row.ok for row in rows) else 1

        if args.command == "cond-trace":
            try:
                rows = experiments.cond_trace(problem, args.order, args.tol, method=args.method)
            except experiments.TraceFailed as exc:
                _write(exc.rows, args, TraceRow)
                print(f"solve failed: {exc}", file=sys.stderr)
                return 1
            _write(rows, args, TraceRow)
            return 0

        config = SolverConfig(method=args.method, nu=args.order, abstol=args.tol, reltol=args.tol, max_steps=args.max_steps)
        try:
            solution = solve(problem, config)
        except OdeFilterError as exc:
            partial = getattr(exc, "partial", None)
            _write(experiments.step_series(partial) if partial is not None else [], args, StepRow)
            print(f"solve failed: {exc}", file=sys.stderr)
            return 1
        _write(experiments.step_series(solution), args, StepRow)
        return 0
    except OSError as exc:
        print(f"odefilter-bench: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"odefilter-bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
