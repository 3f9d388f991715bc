"""Command-line front end.

Three subcommands: ``sweep`` runs the gamma-sweep benchmark grid and emits
CSV, ``solve`` solves one problem file with a chosen preconditioner, and
``diagnose`` prints condition-number diagnostics for a problem file without
solving it.  Exit codes: 0 on success, 1 when any benchmark cell or the
solve itself fails, 2 on invalid input.
"""

import argparse
import json
import sys
import time

import numpy as np

from .bench import (
    GeneratorConfig,
    PRECONDITIONER_NAMES,
    format_csv,
    run_sweep,
)
from .errors import (
    DimensionMismatch,
    HpipgError,
    IncompatibleScaling,
    InvalidInput,
    NotPositiveDefinite,
)
from .pipg import PipgConfig, solve as pipg_solve, solve_qcp
from .precond import (
    block_row_normalize,
    hypersphere_step,
    precondition,
    recover_solution,
    ruiz_equilibrate,
)
from .problem import (
    kappa_at_optimum,
    kkt_condition_number,
    kkt_residual,
    kkt_spectrum,
    load_problem,
    optimal_lambda,
)

_USAGE_ERRORS = (InvalidInput, DimensionMismatch, NotPositiveDefinite, IncompatibleScaling)


def _parse_gammas(text):
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise InvalidInput(f"could not parse --gammas {text!r}: {exc}") from None
    if not values:
        raise InvalidInput("--gammas must name at least one value")
    return values


def _precond_list(choice):
    if choice == "all":
        return list(PRECONDITIONER_NAMES)
    return [choice]


def _cmd_sweep(args):
    cfg = GeneratorConfig(horizon=args.horizon, seed=args.seed)
    results = run_sweep(
        gammas=_parse_gammas(args.gammas),
        preconditioners=_precond_list(args.precond),
        cfg=cfg,
        max_iters=args.max_iters,
        tol=args.tol,
    )
    text = format_csv(results)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        print(f"wrote {len(results)} rows to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    failures = [r for r in results if r.error is not None]
    for r in failures:
        print(f"cell ({r.gamma:g}, {r.preconditioner}) failed: {r.error}", file=sys.stderr)
    return 1 if failures else 0


def _solve_report_csv(name, report, presolve_ms, solve_ms, residual):
    header = (
        "preconditioner,iterations,converged,terminated,presolve_ms,solve_ms,"
        "primal_residual,dual_residual,kkt_residual"
    )
    row = ",".join([
        name,
        str(report.iterations),
        "true" if report.converged else "false",
        report.terminated,
        format(presolve_ms, ".17g"),
        format(solve_ms, ".17g"),
        format(report.primal_residual, ".17g"),
        format(report.dual_residual, ".17g"),
        format(residual, ".17g"),
    ])
    return header + "\n" + row + "\n"


def _cmd_solve(args):
    qcp = load_problem(args.problem)
    cfg = PipgConfig(max_iters=args.max_iters, tol=args.tol)

    t0 = time.perf_counter()
    if args.precond == "hypersphere":
        pre, record = precondition(qcp)
        presolve_ms = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        report = pipg_solve(pre, cfg)
        solve_ms = (time.perf_counter() - t0) * 1e3
        xi, mu = recover_solution(record, report.z_final, report.eta_final)
    elif args.precond == "ruiz":
        scaled, scaling = ruiz_equilibrate(qcp)
        presolve_ms = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        report = solve_qcp(scaled, cfg)
        solve_ms = (time.perf_counter() - t0) * 1e3
        xi, mu = scaling.recover(report.z_final, report.eta_final)
    else:
        presolve_ms = (time.perf_counter() - t0) * 1e3
        t0 = time.perf_counter()
        report = solve_qcp(qcp, cfg)
        solve_ms = (time.perf_counter() - t0) * 1e3
        xi, mu = report.z_final, report.eta_final

    residual = kkt_residual(qcp, xi, mu)
    print(f"preconditioner: {args.precond}")
    print(f"iterations: {report.iterations} ({report.terminated})")
    print(f"kkt residual: {residual:.6e}")
    print(f"presolve: {presolve_ms:.3f} ms, solve: {solve_ms:.3f} ms")
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="") as fh:
            fh.write(_solve_report_csv(args.precond, report, presolve_ms, solve_ms, residual))
    if args.solution:
        payload = {"xi": [float(v) for v in xi], "mu": [float(v) for v in mu]}
        with open(args.solution, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.write("\n")
    return 0 if report.converged else 1


def _cmd_diagnose(args):
    qcp = load_problem(args.problem)
    print(f"variables: {qcp.n}, constraint rows: {qcp.m}")
    if qcp.m == 0:
        print("problem has no conic constraints; nothing to condition")
        return 0
    G_hat, _, _, _, _ = hypersphere_step(qcp)
    H, _, _ = block_row_normalize(G_hat, qcp.g, qcp.cone_blocks)
    sigmas = np.linalg.eigvalsh(H @ H.T)
    sigma_min = float(sigmas[0])
    sigma_max = float(sigmas[-1])
    print(f"constraint Gram spectrum: [{sigma_min:.12g}, {sigma_max:.12g}]")
    if sigma_min <= 1e-12 * max(sigma_max, 1.0):
        print("constraint rows are numerically rank-deficient; "
              "the optimal scaling is undefined")
        return 0
    chi = sigma_max / sigma_min
    lam_star = optimal_lambda(sigma_min)
    print(f"gram condition number: {chi:.12g}")
    print(f"optimal objective scaling: {lam_star:.12g}")
    for label, lam in (("1", 1.0), ("optimal", lam_star)):
        kappa = kkt_condition_number(lam, sigma_min, sigma_max)
        spectrum = kkt_spectrum(lam, sigmas, qcp.n, qcp.m)
        print(f"kappa(lambda = {label}) = {kappa:.12g}  "
              f"[kkt eigenvalues {spectrum[0]:.12g} .. {spectrum[-1]:.12g}]")
    print(f"kappa at optimum from gram conditioning alone: {kappa_at_optimum(chi):.12g}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hpipg",
        description="Factorization-free conic solver with hypersphere preconditioning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run the gamma-sweep benchmark and emit CSV")
    sweep.add_argument("--gammas", default="1,10,100,1000,10000,100000,1000000",
                       help="comma-separated terminal cost scales")
    sweep.add_argument("--precond", default="all",
                       choices=list(PRECONDITIONER_NAMES) + ["all"])
    sweep.add_argument("--horizon", type=int, default=50)
    sweep.add_argument("--max-iters", type=int, default=100_000)
    sweep.add_argument("--tol", type=float, default=0.005,
                       help="relative error against the reference solution")
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--out", default=None, help="CSV path (default: stdout)")
    sweep.set_defaults(func=_cmd_sweep)

    solve = sub.add_parser("solve", help="solve one problem file")
    solve.add_argument("--problem", required=True, help="problem file (JSON)")
    solve.add_argument("--precond", default="hypersphere",
                       choices=list(PRECONDITIONER_NAMES))
    solve.add_argument("--max-iters", type=int, default=100_000)
    solve.add_argument("--tol", type=float, default=1e-8)
    solve.add_argument("--report", default=None, help="write a one-row CSV report")
    solve.add_argument("--solution", default=None,
                       help="write the recovered primal/dual pair as JSON")
    solve.set_defaults(func=_cmd_solve)

    diagnose = sub.add_parser("diagnose",
                              help="print conditioning diagnostics for a problem file")
    diagnose.add_argument("--problem", required=True, help="problem file (JSON)")
    diagnose.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HpipgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
