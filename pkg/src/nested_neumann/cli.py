"""``nested-neumann`` command line.

Subcommands: ``gen-matrix``, ``invert``, ``solve``, ``bench`` and
``analyze-cost``.  Exit status is 0 when the tolerance is met, 2 when a run
stops on its budget or diverges, and 1 on usage, input or validation errors.
"""

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

from . import cost, mmio
from .core import (
    CSRMatrix,
    OpCounter,
    direct_inverse_oracle,
    random_matrix,
    random_sparse_spd,
    random_spd,
    spectral_norm_estimate,
)
from .exceptions import (
    DivergenceError,
    NestedNeumannError,
    NonConvergenceError,
    ShapeError,
)
from .factorized import LinearSystem, factor_count, solve_normal_equations, solve_sparse_factorized
from .preconditioning import theta_power, theta_trace
from .runs import Method, count_str, float_str, relative_residual, run_method
from .solver import ConvergenceReport, SolverConfig, StopReason

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BUDGET = 2
ESTIMATE_KAPPA_MAX_N = 128

BENCH_COLUMNS = [
    "method", "N", "cond", "L", "i", "gamma_effective", "eps_final",
    "n3_multiplies", "n2_ops", "spmv_count", "alpha_estimate", "predicted_n3",
    "wall_seconds", "error",
]


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _theta_arg(text):
    if text == "trace":
        return ("trace", None)
    kind, _, k = text.partition(":")
    if kind == "power" and k.isdigit() and int(k) >= 1:
        return ("power", int(k))
    raise argparse.ArgumentTypeError(f"--theta must be 'trace' or 'power:k', got {text!r}")


def _normalization(w, theta, seed):
    kind, k = theta
    if kind == "trace":
        return theta_trace(w)
    norm = theta_power(w, k, seed)
    if not norm.valid:
        raise UsageError(
            f"power normalization with k={k} does not contract "
            f"(||I - theta W||_2 ~ {norm.contraction_norm:.6g}); try --theta trace")
    return norm


def _require_square(m, name):
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {m.shape[0]}x{m.shape[1]}")


def _dense(m):
    return m.to_dense() if isinstance(m, CSRMatrix) else m


def _estimate_kappa(w):
    w = _dense(w)
    if w.shape[0] > ESTIMATE_KAPPA_MAX_N:
        raise UsageError(f"--estimate-kappa is limited to N <= {ESTIMATE_KAPPA_MAX_N}")
    upper = spectral_norm_estimate(w).value
    lower = spectral_norm_estimate(direct_inverse_oracle(w)).value
    return upper * lower


def _default_path(base, suffix):
    root, _ = os.path.splitext(base)
    return root + suffix


# gen-matrix

def cmd_gen_matrix(args):
    if args.kind == "spd":
        m = random_spd(args.N, args.cond, args.seed)
    elif args.kind == "general":
        m = random_matrix(args.N, args.cond, args.seed, complex_=args.complex)
    else:
        m = random_sparse_spd(args.N, args.density, args.seed)
    if isinstance(m, CSRMatrix):
        mmio.write_sparse(args.out, m)
    else:
        mmio.write_dense(args.out, m)
    print(f"wrote {args.kind} matrix N={args.N} to {args.out}")
    return EXIT_OK


# invert

def cmd_invert(args):
    w = mmio.read_matrix(args.input)
    _require_square(w, os.path.basename(args.input))
    method = Method(args.method)
    if method is not Method.SPARSE_FACTORIZED:
        w = _dense(w)
    norm = _normalization(w, args.theta, args.seed)
    kappa = _estimate_kappa(w) if args.estimate_kappa else args.cond
    result = run_method(
        method, w, norm, depth=args.depth, nests=args.nests, order=args.order,
        gamma=args.gamma, ci_iterations=args.ci, ns_terms=args.terms, tol=args.tol,
    )
    counts = result.counter
    report = ConvergenceReport(
        config={"method": method.value, "depth": result.depth, "nests": args.nests,
                "order": args.order, "gamma": args.gamma, "ci_iterations": args.ci,
                "ns_terms": args.terms, "tol": args.tol,
                "normalization": norm.as_dict()},
        history=result.history,
        n3_multiplies=counts.n3_multiplies,
        n2_ops=counts.n2_ops,
        stopped_reason=result.stopped_reason,
        spmv_count=counts.spmv_count,
        alpha_estimate=result.alpha(),
        kappa_used=kappa,
        theta=norm.theta,
    )
    out = args.out or _default_path(args.input, ".inv.mtx")
    report_path = args.report or _default_path(out, ".json")
    mmio.write_dense(out, result.phi * norm.theta)
    mmio.write_text(report_path, report.to_json() + "\n")
    print(f"{method.value}: eps={result.epsilon:.3e} nests={report.nests} "
          f"n3={count_str(counts.n3_multiplies)} stop={result.stopped_reason.value}")
    return EXIT_OK if result.stopped_reason is StopReason.TOLERANCE else EXIT_BUDGET


# solve

def cmd_solve(args):
    a = mmio.read_matrix(args.a)
    b = mmio.read_matrix(args.b)
    b = _dense(b)
    if args.method == "nn":
        config = SolverConfig(depth=args.depth, max_nests=args.nests or 100, tol=args.tol)
        system = LinearSystem(a, b)
        try:
            x, report = solve_normal_equations(system, config)
            status = EXIT_OK
        except NonConvergenceError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        residual = relative_residual(system.a, x, system.b)
    else:
        if args.gamma is None:
            raise UsageError("sparse-factorized needs --gamma")
        _require_square(a, os.path.basename(args.a))
        if not isinstance(a, CSRMatrix):
            a = CSRMatrix.from_dense(a)
        system = LinearSystem(a, b)
        norm = _normalization(a, args.theta, args.seed)
        counter = OpCounter()
        x = solve_sparse_factorized(system, args.gamma, norm, counter)
        residual = relative_residual(system.a, x, system.b)
        report = ConvergenceReport(
            config={"method": "sparse-factorized", "gamma": args.gamma, "tol": args.tol,
                    "normalization": norm.as_dict()},
            history=[(1, residual)],
            n3_multiplies=counter.n3_multiplies,
            n2_ops=counter.n2_ops,
            stopped_reason=StopReason.TOLERANCE if residual < args.tol else StopReason.MAX_NESTS,
            spmv_count=counter.spmv_count,
            theta=norm.theta,
        )
        status = EXIT_OK if residual < args.tol else EXIT_BUDGET
    report.backward_residual = residual
    out = args.out or _default_path(args.b, ".x.mtx")
    report_path = args.report or _default_path(out, ".json")
    mmio.write_dense(out, x)
    mmio.write_text(report_path, report.to_json() + "\n")
    print(f"{args.method}: relative residual {residual:.3e}")
    return status


# bench

def _bench_grid(args):
    """Yield ``(method, N, cond, kwargs)`` in deterministic order."""
    for method in args.methods:
        for n in args.N:
            for cond in args.cond:
                if method in (Method.NN, Method.NS, Method.NN_EXPLICIT):
                    for depth in args.depths:
                        for nests in args.nests:
                            yield method, n, cond, {"depth": depth, "nests": nests}
                elif method in (Method.NEWTON, Method.CHEBYSHEV):
                    depth = 1 if method is Method.NEWTON else 2
                    for nests in args.nests:
                        yield method, n, cond, {"depth": depth, "nests": nests}
                elif method is Method.CNS:
                    for ci in args.ci:
                        for terms in args.terms:
                            yield method, n, cond, {"ci_iterations": ci, "ns_terms": terms}
                else:
                    for gamma in args.gammas:
                        yield method, n, cond, {"gamma": gamma}


def _bench_problem(n, cond, seed):
    w = random_spd(n, cond, seed)
    return w, theta_trace(w)


def _bench_row(args, problems, method, n, cond, kwargs):
    row = dict.fromkeys(BENCH_COLUMNS, "")
    row.update(method=method.value, N=n, cond=float_str(cond),
               L=kwargs.get("depth", ""), i=kwargs.get("nests", ""))
    start = time.perf_counter()
    try:
        problem = problems[(n, cond)]
        if isinstance(problem, Exception):
            raise problem
        w, norm = problem
        extra = {"rhs": args.rhs, "seed": args.seed} if method is Method.SPARSE_FACTORIZED else {}
        result = run_method(method, w, norm, tol=args.tol, **kwargs, **extra)
    except (NestedNeumannError, ValueError, ArithmeticError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        row["wall_seconds"] = float_str(time.perf_counter() - start)
        return row
    counts = result.counter
    if result.nests is not None:
        row["i"] = result.nests
    row.update(
        gamma_effective=result.gamma_effective,
        eps_final=float_str(result.epsilon),
        n3_multiplies=count_str(counts.n3_multiplies),
        n2_ops=counts.n2_ops,
        spmv_count=counts.spmv_count,
        alpha_estimate=float_str(result.alpha()),
        predicted_n3=count_str(result.predicted_n3),
        wall_seconds=float_str(time.perf_counter() - start),
    )
    return row


def _workers():
    try:
        return max(1, int(os.environ.get("NN_WORKERS", "1")))
    except ValueError:
        return 1


def cmd_bench(args):
    if not args.methods:
        raise UsageError("--methods must name at least one method")
    grid = list(_bench_grid(args))
    problems = {}
    for n in args.N:
        for cond in args.cond:
            try:
                problems[(n, cond)] = _bench_problem(n, cond, args.seed)
            except (NestedNeumannError, ValueError, ArithmeticError) as exc:
                problems[(n, cond)] = exc
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        rows = list(pool.map(lambda point: _bench_row(args, problems, *point), grid))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        mmio.write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    failed = sum(1 for r in rows if r["error"])
    print(f"bench: {len(rows)} runs, {failed} failed", file=sys.stderr)
    return EXIT_BUDGET if rows and failed == len(rows) else EXIT_OK


# analyze-cost

def _cost_rows(args):
    rows = []
    for depth in args.depths:
        for nests in args.nests:
            rows.append(cost.cost_nn(nests, depth, args.N))
            rows.append(cost.cost_nn(nests, depth, args.N, budget_variant=True))
            rows.append(cost.cost_nn_explicit_sparse(nests, depth, args.N))
    for gamma in args.gammas:
        rows.append(cost.cost_factorized(gamma, args.N))
        rows.append(cost.cost_factorized_sparse_stored(gamma, args.N))
    return [r.as_row() for r in rows]


def _budget_rows(args):
    analysis = cost.optimal_depth(args.budget, args.max_depth)
    return [
        {"budget_k": args.budget, "L": depth, "nests": args.budget // (depth + 1),
         "order": order, "objective": repr(analysis.log_objective[depth]),
         "optimal": depth == analysis.argmax_L}
        for depth, order in analysis.per_depth
    ]


def cmd_analyze_cost(args):
    for gamma in args.gammas:
        factor_count(gamma)
    rows = _budget_rows(args) if args.budget is not None else _cost_rows(args)
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
    if args.out:
        mmio.write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nested-neumann", description="Nested Neumann matrix inversion and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-matrix", help="write a seeded test matrix")
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--cond", type=float, default=1e2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--kind", choices=["spd", "general", "sparse-spd"], default="spd")
    g.add_argument("--complex", action="store_true", help="complex entries (general only)")
    g.add_argument("--density", type=float, default=0.05, help="sparse-spd fill fraction")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_matrix)

    def solver_flags(p):
        p.add_argument("--depth", "-L", type=int, default=2)
        p.add_argument("--nests", "-i", type=int, default=None)
        p.add_argument("--gamma", type=int, default=None)
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--theta", type=_theta_arg, default=("trace", None))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        p.add_argument("--report", default=None)

    inv = sub.add_parser("invert", help="approximate the inverse of a square matrix")
    inv.add_argument("input")
    inv.add_argument("--method", choices=[m.value for m in Method], default="nn")
    solver_flags(inv)
    inv.add_argument("--order", type=int, default=None, help="ns order")
    inv.add_argument("--ci", type=int, default=1, help="cns Chebyshev index")
    inv.add_argument("--terms", type=int, default=1, help="cns outer series order")
    inv.add_argument("--cond", type=float, default=None, help="known condition number")
    inv.add_argument("--estimate-kappa", action="store_true",
                     help=f"compute ||W||_2 ||W^-1||_2 directly (N <= {ESTIMATE_KAPPA_MAX_N})")
    inv.set_defaults(func=cmd_invert)

    sol = sub.add_parser("solve", help="solve A x = B")
    sol.add_argument("a")
    sol.add_argument("b")
    sol.add_argument("--method", choices=["nn", "sparse-factorized"], default="nn")
    solver_flags(sol)
    sol.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="sweep methods and write a CSV table")
    b.add_argument("--methods", type=lambda t: [Method(m) for m in t.split(",") if m],
                   required=True)
    b.add_argument("--N", type=_int_list, default=[32])
    b.add_argument("--cond", type=_float_list, default=[1e2])
    b.add_argument("--depths", type=_int_list, default=[1, 2, 3])
    b.add_argument("--nests", type=_int_list, default=[1, 2, 3, 4])
    b.add_argument("--gammas", type=_int_list, default=[1, 3, 7, 15])
    b.add_argument("--ci", type=_int_list, default=[0, 1])
    b.add_argument("--terms", type=_int_list, default=[1, 3])
    b.add_argument("--tol", type=float, default=1e-10)
    b.add_argument("--rhs", type=int, default=None,
                   help="right-hand sides for sparse-factorized rows (default: identity)")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("analyze-cost", help="tabulate the analytic cost models")
    c.add_argument("--N", type=int, default=64)
    c.add_argument("--depths", type=_int_list, default=[1, 2, 3])
    c.add_argument("--nests", type=_int_list, default=[1, 2, 3])
    c.add_argument("--gammas", type=_int_list, default=[1, 3, 7, 15])
    c.add_argument("--budget", type=int, default=None, help="fixed N^3 budget K")
    c.add_argument("--max-depth", type=int, default=8)
    c.add_argument("--format", choices=["csv", "json"], default="csv")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_analyze_cost)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, NestedNeumannError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
