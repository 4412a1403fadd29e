"""Command-line entry point: solve, oracle, and benchmark sweeps.

Exit codes: 0 success, 2 parse/input error, 3 validation or size-limit
error, 4 solver failure. Every output file embeds the resolved
configuration (flags, defaults, seed, version) as # comment lines; apart
from wall-time fields, re-running a command reproduces its outputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib.metadata import PackageNotFoundError, version as _dist_version

from .affinity import (ParseError, ScoringConfig, ValidationError, load_matrix)
from .bench import (BunnySpec, SparsitySpec, plot_bunny, plot_sparsity,
                    run_bunny_sweep, run_sparsity_sweep, synthetic_surface,
                    write_bunny_csv, write_sparsity_csv)
from .geometry import (affinity_lines, affinity_planes, affinity_points,
                       all_to_all, load_associations_csv, load_lines_csv,
                       load_planes_csv, load_points)
from .oracle import exact_densest, exact_max_clique
from .solver import SolverFailure, SolverParams, save_solution, solve

EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_SOLVER = 4


def _version() -> str:
    try:
        return _dist_version("denseassoc")
    except PackageNotFoundError:
        return "0.1.0"


def _default_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CLIPPER_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ParseError(f"CLIPPER_SEED must be an integer, got {env!r}") from None
    return 0


def _solver_params(args, seed: int) -> SolverParams:
    return SolverParams(
        d0=args.d0, delta_d=args.delta_d, tol_u=args.tol_u, tol_F=args.tol_f,
        max_inner_iters=args.max_inner, max_outer_iters=args.max_outer,
        beta=args.beta, min_alpha=args.min_alpha, seed=seed)


def _add_solver_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver")
    g.add_argument("--d0", type=float, default=1.0, help="initial penalty")
    g.add_argument("--delta-d", type=float, default=None,
                   help="penalty increment (default ceil(n/10))")
    g.add_argument("--tol-u", type=float, default=1e-9)
    g.add_argument("--tol-f", type=float, default=1e-12)
    g.add_argument("--max-inner", type=int, default=1000)
    g.add_argument("--max-outer", type=int, default=100)
    g.add_argument("--beta", type=float, default=0.5)
    g.add_argument("--min-alpha", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (falls back to CLIPPER_SEED, then 0)")


def _add_scoring_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("scoring")
    g.add_argument("--epsilon", type=float, default=0.08,
                   help="consistency threshold (residual units)")
    g.add_argument("--sigma", type=float, default=0.03,
                   help="Gaussian width for weighted scoring")
    g.add_argument("--binary", action="store_true",
                   help="binary scoring instead of weighted")


def _scoring(args) -> ScoringConfig:
    if args.binary:
        return ScoringConfig(args.epsilon, kind="binary")
    return ScoringConfig(args.epsilon, args.sigma, "weighted")


def _config_header(args, seed: int) -> dict:
    cfg = {"version": _version(), "command": args.command}
    if getattr(args, "bench_kind", None):
        cfg["command"] = f"{args.command} {args.bench_kind}"
    for k in sorted(vars(args)):
        if k in ("func", "command", "bench_kind", "seed"):
            continue
        cfg[k] = getattr(args, k)
    cfg["seed"] = seed
    return cfg


def _build_matrix(args):
    given = [bool(args.matrix), bool(args.points_a or args.points_b),
             bool(args.lines_a or args.lines_b), bool(args.planes_a or args.planes_b)]
    if sum(given) != 1:
        raise ParseError("give exactly one input kind: --matrix, --points-a/b, "
                         "--lines-a/b, or --planes-a/b")
    if args.matrix:
        return load_matrix(args.matrix)
    if args.points_a or args.points_b:
        if not (args.points_a and args.points_b):
            raise ParseError("--points-a and --points-b must be given together")
        a, b = load_points(args.points_a), load_points(args.points_b)
        build, na, nb = affinity_points, len(a), len(b)
    elif args.lines_a or args.lines_b:
        if not (args.lines_a and args.lines_b):
            raise ParseError("--lines-a and --lines-b must be given together")
        a, b = load_lines_csv(args.lines_a), load_lines_csv(args.lines_b)
        build, na, nb = affinity_lines, len(a), len(b)
    else:
        if not (args.planes_a and args.planes_b):
            raise ParseError("--planes-a and --planes-b must be given together")
        a, b = load_planes_csv(args.planes_a), load_planes_csv(args.planes_b)
        build, na, nb = affinity_planes, len(a), len(b)
    if args.assoc is None:
        raise ParseError("--assoc is required with observation inputs ('all' or a CSV path)")
    assoc = all_to_all(na, nb) if args.assoc == "all" else load_associations_csv(args.assoc)
    return build(a, b, assoc, _scoring(args), allow_large=args.allow_large)


def cmd_solve(args) -> int:
    seed = _default_seed(args)
    matrix = _build_matrix(args)
    sol = solve(matrix, _solver_params(args, seed))
    if args.out:
        save_solution(sol, args.out, header=_config_header(args, seed))
    print(f"omega={sol.omega_hat} density={sol.density:.6f} "
          f"feasible={1 if sol.feasible else 0} ms={sol.stats.wall_ms:.3f}")
    return 0


def cmd_oracle(args) -> int:
    matrix = load_matrix(args.matrix)
    res = exact_densest(matrix) if args.mode == "densest" else exact_max_clique(matrix)
    best = ",".join(str(i) for i in res.best_set)
    print(f"mode={args.mode} set={best} value={res.best_value:.6f} "
          f"nodes={res.nodes_explored}")
    return 0


def _parse_grid(text: str, what: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ParseError(f"bad {what} grid: {text!r}") from None
    if not values:
        raise ParseError(f"empty {what} grid")
    return values


def cmd_bench(args) -> int:
    seed = _default_seed(args)
    params = _solver_params(args, seed)
    header = _config_header(args, seed)
    if args.bench_kind == "sparsity":
        grid = _parse_grid(args.sparsity_grid, "sparsity")
        specs = [SparsitySpec(n=args.n, sparsity=s, trials=args.trials, seed=seed)
                 for s in grid]
        rows = run_sparsity_sweep(specs, params, jobs=args.jobs,
                                  log=lambda msg: print(msg, file=sys.stderr))
        write_sparsity_csv(rows, args.out if args.out else sys.stdout, header=header)
        if args.plot:
            plot_sparsity(rows, args.plot)
    else:
        grid = _parse_grid(args.or_grid, "outlier-ratio")
        model = load_points(args.model) if args.model else synthetic_surface(args.model_size)
        specs = [BunnySpec(
            n_model_points=args.n_points, noise_halfwidth=args.noise,
            n_clutter=args.clutter, clutter_radius=args.clutter_radius,
            outlier_ratio=r, n_assoc=args.n_assoc, epsilon=args.epsilon,
            sigma=args.sigma, kind="binary" if args.binary else "weighted",
            trials=args.trials, seed=seed) for r in grid]
        rows = run_bunny_sweep(specs, params, model=model, jobs=args.jobs,
                               log=lambda msg: print(msg, file=sys.stderr))
        write_bunny_csv(rows, args.out if args.out else sys.stdout, header=header)
        if args.plot:
            plot_bunny(rows, args.plot)
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="denseassoc",
        description="Robust data association via consistency graphs and "
                    "densest-subgraph selection")
    top.add_argument("--version", action="version", version=_version())
    sub = top.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="select the densest consistent association set")
    p_solve.add_argument("--matrix", help="affinity matrix file")
    p_solve.add_argument("--points-a")
    p_solve.add_argument("--points-b")
    p_solve.add_argument("--lines-a")
    p_solve.add_argument("--lines-b")
    p_solve.add_argument("--planes-a")
    p_solve.add_argument("--planes-b")
    p_solve.add_argument("--assoc", help="'all' or an association CSV")
    p_solve.add_argument("--allow-large", action="store_true",
                         help="override the O(m^2) association-count guard")
    p_solve.add_argument("--out", help="write the solution file here")
    _add_scoring_flags(p_solve)
    _add_solver_flags(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_oracle = sub.add_parser("oracle", help="exact small-instance reference solvers")
    p_oracle.add_argument("--matrix", required=True)
    p_oracle.add_argument("--mode", choices=["densest", "clique"], required=True)
    p_oracle.set_defaults(func=cmd_oracle)

    p_bench = sub.add_parser("bench", help="benchmark sweeps")
    bench_sub = p_bench.add_subparsers(dest="bench_kind", required=True)

    p_sp = bench_sub.add_parser("sparsity", help="binary graphs across sparsity")
    p_sp.add_argument("--n", type=int, default=40)
    p_sp.add_argument("--trials", type=int, default=50)
    p_sp.add_argument("--sparsity-grid",
                      default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    p_sp.add_argument("--out", help="CSV path (stdout when omitted)")
    p_sp.add_argument("--plot", help="write a PNG/SVG figure here")
    p_sp.add_argument("--jobs", type=int, default=1)
    _add_solver_flags(p_sp)
    p_sp.set_defaults(func=cmd_bench)

    p_bn = bench_sub.add_parser("bunny", help="two-view association across outlier ratios")
    p_bn.add_argument("--or-grid", default="0,0.7,0.8,0.9,0.95,0.97,0.99")
    p_bn.add_argument("--trials", type=int, default=50)
    p_bn.add_argument("--n-points", type=int, default=1000)
    p_bn.add_argument("--noise", type=float, default=0.01)
    p_bn.add_argument("--clutter", type=int, default=200)
    p_bn.add_argument("--clutter-radius", type=float, default=1.0)
    p_bn.add_argument("--n-assoc", type=int, default=1000)
    p_bn.add_argument("--model", help="model point cloud (PLY or CSV); "
                                      "default is a deterministic synthetic surface")
    p_bn.add_argument("--model-size", type=int, default=5000,
                      help="point count of the synthetic model")
    p_bn.add_argument("--out", help="CSV path (stdout when omitted)")
    p_bn.add_argument("--plot", help="write a PNG/SVG figure here")
    p_bn.add_argument("--jobs", type=int, default=1)
    _add_scoring_flags(p_bn)
    _add_solver_flags(p_bn)
    p_bn.set_defaults(func=cmd_bench)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_PARSE
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverFailure as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
