"""
Command-line harness.

    aggmbfgs-bench solve  --problem ARWHEAD --dim 100 --variant agg
    aggmbfgs-bench bench  --variants mlbfgs,agg --output runs.csv
    aggmbfgs-bench verify --trials 500 --max-n 12 --max-m 6

Exit codes: 0 converged / all suites pass, 1 usage or input error (and failed
verification), 2 iteration limit, 3 line-search failure.
"""
import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from . import verification
from .errors import InvalidDimension, UnknownProblem
from .problems import CATALOG, catalog, make_problem
from .solver import SolverConfig, Status, Variant, solve_timed

logger = logging.getLogger(__name__)

CSV_HEADER = ["name", "dim", "variant", "iters", "func_evals", "agg_count",
              "final_f", "final_gnorm", "status", "wall_ms"]
EXIT_CODES = {Status.CONVERGED: 0, Status.ITER_LIMIT: 2, Status.LINE_SEARCH_FAILURE: 3}
VARIANT_NAMES = [v.value for v in Variant]


class UsageError(Exception):
    pass


@dataclass
class RunRecord:
    name: str
    dim: int
    variant: str
    iters: int
    func_evals: int
    agg_count: int
    final_f: float
    final_gnorm: float
    status: str
    wall_ms: float

    def row(self):
        return [self.name, str(self.dim), self.variant, str(self.iters), str(self.func_evals),
                str(self.agg_count), f"{self.final_f:.12e}", f"{self.final_gnorm:.6e}",
                self.status, f"{self.wall_ms:.3f}"]

    @property
    def key(self):
        return (self.name, self.dim, self.variant)


def _config_from(args, variant):
    return SolverConfig(variant=Variant(variant), memory=args.memory, grad_tol=args.tol,
                        max_iters=args.max_iters, ls_contraction=args.ls_contraction,
                        ls_sufficient=args.ls_sufficient, seed=args.seed)


def run_one(name, dim, cfg):
    """Solve one problem and return its RunRecord."""
    problem = make_problem(name, dim)
    res, ms = solve_timed(problem, cfg)
    return RunRecord(problem.name, problem.dim, cfg.variant.value, res.iters, res.func_evals,
                     res.agg_count, res.f_final, res.grad_inf_norm, res.status.value, ms)


def _run_job(job):
    return run_one(*job)


def read_config(path):
    """``name dim`` pairs, one per line; ``#`` starts a comment."""
    entries = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise UsageError(f"{path}:{lineno}: expected 'name dim'")
            try:
                entries.append((parts[0].upper(), int(parts[1])))
            except ValueError:
                raise UsageError(f"{path}:{lineno}: dimension must be an integer") from None
    return entries


def format_table(records):
    head = f"{'name':<11}{'dim':>6} {'variant':<7}{'iters':>7}{'nf':>7}{'agg':>5} {'final_f':>13} {'gnorm':>10}  status"
    lines = [head, "-" * len(head)]
    for r in records:
        lines.append(f"{r.name:<11}{r.dim:>6} {r.variant:<7}{r.iters:>7}{r.func_evals:>7}"
                     f"{r.agg_count:>5} {r.final_f:>13.6e} {r.final_gnorm:>10.3e}  {r.status}")
    return "\n".join(lines)


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow(r.row())


def cmd_solve(args):
    if not args.problem:
        raise UsageError("solve needs --problem")
    rec = run_one(args.problem, args.dim, _config_from(args, args.variant))
    print(",".join(CSV_HEADER))
    print(",".join(rec.row()))
    if args.output:
        write_csv([rec], args.output)
    return EXIT_CODES[Status(rec.status)]


def _bench_entries(args):
    if args.config:
        entries = read_config(args.config)
    elif args.problems is not None:
        names = [p.strip().upper() for p in args.problems.split(",") if p.strip()]
        entries = [(name, args.dim) for name in names]
    else:
        entries = [(name, args.dim) for name in catalog()]
    # validate eagerly so a bad entry fails before any solve starts
    for name, dim in entries:
        if name not in CATALOG:
            raise UnknownProblem(f"unknown problem {name!r}")
        if dim is not None:
            CATALOG[name].check_dim(dim)
    return entries


def _variants(spec):
    names = [v.strip().lower() for v in spec.split(",") if v.strip()]
    bad = [v for v in names if v not in VARIANT_NAMES]
    if bad or not names:
        raise UsageError(f"variants must be drawn from {','.join(VARIANT_NAMES)}")
    return list(dict.fromkeys(names))


def cmd_bench(args):
    entries = _bench_entries(args)
    if not entries:
        raise UsageError("empty problem list")
    variants = _variants(args.variants)
    jobs = [(name, dim, _config_from(args, v)) for name, dim in entries for v in variants]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = [_run_job(job) for job in jobs]
    records.sort(key=lambda r: r.key)
    print(format_table(records))
    if args.output:
        write_csv(records, args.output)
    return 0


def cmd_verify(args):
    results = verification.run_all(seed=args.seed, trials=args.trials,
                                   max_n=args.max_n, max_m=args.max_m)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="aggmbfgs-bench",
                                     description="Modified BFGS solvers and benchmark harness")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--dim", type=int, default=None, help="problem dimension (family default)")
        p.add_argument("--memory", type=int, default=5)
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--max-iters", type=int, default=100_000)
        p.add_argument("--ls-contraction", type=float, default=0.5)
        p.add_argument("--ls-sufficient", type=float, default=1e-4)
        p.add_argument("--output", default=None, help="CSV output path")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("solve", help="run one solve")
    p.add_argument("--problem", required=False)
    p.add_argument("--variant", choices=VARIANT_NAMES, default="agg")
    solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run variants over a set of problems")
    p.add_argument("--problems", default=None, help="comma-separated names (default: whole catalog)")
    p.add_argument("--config", default=None, help="file of 'name dim' lines")
    p.add_argument("--variants", default=",".join(VARIANT_NAMES))
    p.add_argument("--jobs", type=int, default=1)
    solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run the matrix-identity oracle suites")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--max-n", type=int, default=None)
    p.add_argument("--max-m", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad flags; 2 is reserved for IterLimit here
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (UsageError, UnknownProblem, InvalidDimension, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
