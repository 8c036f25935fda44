"""Command-line front end.

Subcommands: ``gen`` (write a random scenario), ``solve`` (run one solver
with a trace CSV, result file, optional figure), ``sweep`` (multi-start
study with objective clustering), ``verify`` (first-order residual report
for a saved solution), ``counterexample`` (the two-stream construction
with unequal multipliers).

Exit codes: 0 success/converged, 1 usage or input error,
2 infeasible initialization, 3 infeasible power system, 4 iteration
limit, 5 degenerate user.

Relative output paths are resolved under $QCPM_OUT_DIR when it is set.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import mmse_dual, udd
from .kkt import duality_certificate, kkt_residual
from .mmse_dual import MmseDualOptions, SolveStatus, warm_start
from .multistream import build_counterexample, counterexample_residuals, solve_multistream
from .scenario import ScenarioError, load_scenario, random_scenario, save_scenario
from .solution_io import load_solution, save_solution
from .streams import StreamProblem

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE_INIT = 2
EXIT_INFEASIBLE_POWER = 3
EXIT_MAX_ITERS = 4
EXIT_DEGENERATE = 5

_STATUS_EXIT = {
    SolveStatus.CONVERGED: EXIT_OK,
    SolveStatus.INFEASIBLE_INITIALIZATION: EXIT_INFEASIBLE_INIT,
    SolveStatus.INFEASIBLE_POWER_SYSTEM: EXIT_INFEASIBLE_POWER,
    SolveStatus.MAX_ITERS: EXIT_MAX_ITERS,
    SolveStatus.DEGENERATE_USER: EXIT_DEGENERATE,
}


def _out_path(path):
    if path is None:
        return None
    base = os.environ.get("QCPM_OUT_DIR")
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _per_user(text):
    vals = [float(x) for x in str(text).split(",")]
    return vals[0] if len(vals) == 1 else vals


def cmd_gen(args) -> int:
    """Generate a scenario file from dimensions, targets, and a seed."""
    try:
        scn = random_scenario(
            K=args.K, M=args.M, N=_per_user(args.N),
            gamma=_per_user(args.gamma), sigma2=_per_user(args.sigma2),
            seed=args.seed,
            d=_per_user(args.d) if args.d is not None else None,
            rate=_per_user(args.rate) if args.rate is not None else None,
        )
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    path = _out_path(args.output)
    save_scenario(scn, path)
    print(f"wrote {path} (seed={args.seed})")
    return EXIT_OK


def _make_options(args) -> MmseDualOptions:
    return MmseDualOptions(
        max_outer_iters=args.max_iter,
        fixed_point_iters=args.fp_iters,
        tolerance=args.tol,
        direction_tol=args.direction_tol,
        init_mode={"zf": "zero_forcing", "random": "random",
                   "file": "from_file"}[args.init],
        seed=args.seed,
    )


def _run_solver(scn, args, opts):
    problem = StreamProblem.from_scenario(scn)
    tx0 = None
    if args.init == "file":
        if not args.init_file:
            raise ScenarioError("--init file requires --init-file")
        tx0, _, _, layout, _ = load_solution(args.init_file)
        if layout.streams_per_user != problem.layout.streams_per_user:
            raise ScenarioError("initial beamformer file does not match the "
                                "scenario's stream layout")
    if args.algo == "mmse-dual":
        return mmse_dual.solve_streams(problem, opts, tx0=tx0), problem
    if tx0 is None:
        tx0 = warm_start(problem, opts)
    return udd.solve_streams(problem, tx0, opts), problem


def cmd_solve(args) -> int:
    """Run one solver on a scenario; emit trace CSV, result, figure."""
    try:
        scn = load_scenario(args.scenario)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    opts = _make_options(args)
    try:
        result, problem = _run_solver(scn, args, opts)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except mmse_dual.PowerSystemError as exc:
        print(f"error: warm start failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE_POWER

    if args.trace:
        result.trace.write_csv(_out_path(args.trace))
    if args.output:
        save_solution(result, problem.layout, _out_path(args.output),
                      algorithm=args.algo)
    if args.plot:
        from .plots import plot_trace
        plot_trace(result.trace, _out_path(args.plot),
                   title=f"{args.algo} on {os.path.basename(args.scenario)}")
    if result.status == SolveStatus.CONVERGED:
        print(f"{args.algo}: converged in {result.iterations} iterations, "
              f"total power {result.total_power:.10g}")
    else:
        print(f"{args.algo}: {result.status.value}: {result.message}",
              file=sys.stderr)
    return _STATUS_EXIT[result.status]


def _cluster_count(powers, rel=1e-4):
    """Number of distinct converged objectives at relative resolution."""
    vals = sorted(powers)
    if not vals:
        return 0
    clusters = 1
    anchor = vals[0]
    for v in vals[1:]:
        if (v - anchor) / max(anchor, 1e-300) > rel:
            clusters += 1
            anchor = v
    return clusters


def cmd_sweep(args) -> int:
    """Solve one scenario from many random starts; cluster the objectives."""
    try:
        scn = load_scenario(args.scenario)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    problem = StreamProblem.from_scenario(scn)

    def one(seed):
        opts = MmseDualOptions(
            max_outer_iters=args.max_iter, fixed_point_iters=args.fp_iters,
            tolerance=args.tol, direction_tol=args.direction_tol, seed=seed,
        )
        try:
            if args.algo == "mmse-dual":
                res = mmse_dual.solve_streams(problem, opts)
            else:
                tx0 = warm_start(problem, opts)
                res = udd.solve_streams(problem, tx0, opts)
        except mmse_dual.PowerSystemError as exc:
            return {"seed": seed, "converged_power": float("nan"),
                    "iters": 0, "status": f"warm_start_failed"}
        return {"seed": seed,
                "converged_power": res.total_power if res.converged else float("nan"),
                "iters": res.iterations, "status": res.status.value}

    seeds = [args.seed_base + i for i in range(args.inits)]
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(one, seeds))
    else:
        records = [one(s) for s in seeds]
    records.sort(key=lambda r: r["seed"])

    path = _out_path(args.output)
    with open(path, "w") as fh:
        fh.write("seed,converged_power,iters,status\n")
        for r in records:
            fh.write(f"{r['seed']},{r['converged_power']!r},"
                     f"{r['iters']},{r['status']}\n")
    good = [r["converged_power"] for r in records if r["status"] == "converged"]
    n_clusters = _cluster_count(good, args.cluster_tol)
    print(f"wrote {path}: {len(good)}/{len(records)} converged, "
          f"{n_clusters} objective cluster(s) at {args.cluster_tol:g} relative")
    if n_clusters > 1:
        print(f"note: multiple local values found "
              f"(min {min(good):.10g}, max {max(good):.10g}); "
              f"scenario={args.scenario} seeds={seeds[0]}..{seeds[-1]}")
    if args.plot:
        from .plots import plot_sweep
        plot_sweep(records, _out_path(args.plot),
                   title=f"{args.algo}: {args.inits} initializations")
    return EXIT_OK


def cmd_verify(args) -> int:
    """First-order residual report for a saved solution; exit 0 iff it
    passes at the standard thresholds (residuals 1e-6, gap 1e-8)."""
    try:
        scn = load_scenario(args.scenario)
        tx, rx, lam, layout, doc = load_solution(args.solution)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    problem = StreamProblem.from_scenario(scn)
    if layout.streams_per_user != problem.layout.streams_per_user:
        print("error: solution layout does not match scenario", file=sys.stderr)
        return EXIT_USAGE
    if rx is None or lam is None:
        print("error: solution file lacks receivers or multipliers",
              file=sys.stderr)
        return EXIT_USAGE
    report = kkt_residual(tx, rx, lam, problem)
    if args.output:
        report.save(_out_path(args.output))
    ok = report.is_kkt(1e-6) and report.duality_gap < 1e-8
    print(f"max residual {report.max_residual():.3e}, "
          f"duality gap {report.duality_gap:.3e}, "
          f"min lambda {report.dual_feasibility:.3e} -> "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_USAGE


def cmd_counterexample(args) -> int:
    """Construct and verify the unequal-multiplier two-stream point."""
    diag = [float(x) for x in args.h_diag.split(",")]
    H = np.diag(np.array(diag, dtype=complex))
    try:
        tup = build_counterexample(H, args.gamma)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    u1, u2, v1, v2, lam1, lam2 = tup
    res = counterexample_residuals(H, args.gamma, tup)
    per_stream = max(v for k, v in res.items() if k != "collapsed_stationarity")
    print(f"H = diag({args.h_diag}), gamma = {args.gamma:g}")
    for name, vec in (("v1", v1), ("v2", v2), ("u1", u1), ("u2", u2)):
        print(f"  {name} = {np.array2string(vec, precision=6)}")
    print(f"  lambda = ({lam1:.10g}, {lam2:.10g})")
    print(f"  per-stream KKT residual: {per_stream:.3e}")
    print(f"  collapsed single-multiplier stationarity residual: "
          f"{res['collapsed_stationarity']:.3e}")
    return EXIT_OK if per_stream < 1e-10 else EXIT_USAGE


def _add_solver_flags(p):
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8,
                   help="relative total-power change threshold")
    p.add_argument("--direction-tol", type=float, default=1e-7,
                   help="relative beamformer change threshold")
    p.add_argument("--fp-iters", type=int, default=20,
                   help="inner fixed-point iterations per outer step")
    p.add_argument("--seed", type=int, default=0)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="qcpm",
        description="SINR-constrained transmit power minimization for the "
                    "multi-user MIMO downlink",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random scenario file")
    g.add_argument("--K", type=int, required=True)
    g.add_argument("--M", type=int, required=True)
    g.add_argument("--N", required=True, help="per-user rx antennas (scalar or list)")
    g.add_argument("--gamma", required=True, help="per-user SINR targets")
    g.add_argument("--sigma2", required=True, help="per-user noise variances")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--d", default=None, help="per-user stream counts")
    g.add_argument("--rate", default=None, help="per-user rate targets (nats)")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run a solver on a scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--algo", choices=("mmse-dual", "udd"), default="mmse-dual")
    s.add_argument("--init", choices=("random", "zf", "file"), default="random")
    s.add_argument("--init-file", default=None,
                   help="solution file supplying initial beamformers")
    s.add_argument("--trace", default=None, help="trace CSV path")
    s.add_argument("-o", "--output", default=None, help="result file path")
    s.add_argument("--plot", default=None, help="convergence figure (PNG) path")
    _add_solver_flags(s)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="multi-start study on one scenario")
    w.add_argument("--scenario", required=True)
    w.add_argument("--algo", choices=("mmse-dual", "udd"), default="mmse-dual")
    w.add_argument("--inits", type=int, default=20)
    w.add_argument("--seed-base", type=int, default=0)
    w.add_argument("--cluster-tol", type=float, default=1e-4)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("-o", "--output", required=True, help="summary CSV path")
    w.add_argument("--plot", default=None, help="objective scatter (PNG) path")
    _add_solver_flags(w)
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="first-order residual report")
    v.add_argument("--scenario", required=True)
    v.add_argument("--solution", required=True)
    v.add_argument("-o", "--output", default=None, help="report JSON path")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("counterexample",
                       help="two-stream point with unequal multipliers")
    c.add_argument("--h-diag", default="1,2",
                   help="diagonal of the square channel matrix")
    c.add_argument("--gamma", type=float, default=1.0)
    c.set_defaults(func=cmd_counterexample)

    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
