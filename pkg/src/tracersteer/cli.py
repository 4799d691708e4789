"""Command-line front end: ``tracersteer {solve,simulate,check,cost}``.

Exit codes: 0 ok, 1 configuration error, 2 no convergence, 3 infeasible
terminal surface, 4 malformed input file, 5 failed check.
Log verbosity comes from ``TRACERSTEER_LOG`` (error, info or debug).
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .artifacts import (load_solution_dir, summary_dict, write_ensemble, write_iterations,
                        write_solution_dir, write_summary)
from .checks import verify_solution
from .config import load_config
from .ensemble import attention_cost, kinetic_cost, simulate_ensemble
from .errors import (CheckFailed, FileFormatError, InfeasibleSurface, NoConvergence,
                     RegimeMismatch, SchemaError, UnknownGenerator)
from .shoot import solve_shooting

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_CONVERGENCE = 2
EXIT_INFEASIBLE = 3
EXIT_FILE_FORMAT = 4
EXIT_CHECK_FAILED = 5

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
log = logging.getLogger("tracersteer")


def _setup_logging():
    name = os.environ.get("TRACERSTEER_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name, logging.ERROR)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False
    if name not in LOG_LEVELS:
        log.error("ignoring unknown TRACERSTEER_LOG=%r; use error, info or debug", name)


def cmd_solve(args):
    config = load_config(args.config)
    out = Path(args.out if args.out is not None else config.directory)
    problem = config.build_problem()
    log.info("solving problem %d (n=%d, m=%d) on %d steps", config.problem, config.n, config.m, config.steps)
    try:
        sol = solve_shooting(problem, config.grid, config.options)
    except NoConvergence as exc:
        out.mkdir(parents=True, exist_ok=True)
        write_summary(out, {"converged": False, "residual_norm": exc.best_residual,
                            "message": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    write_solution_dir(out, sol, config)
    summary = summary_dict(sol)
    print(json.dumps({k: summary[k] for k in ("converged", "iterations", "residual_norm", "J_KE",
                                               "J_A", "total_cost", "Phi1")}, indent=1))
    return EXIT_OK


def cmd_simulate(args):
    sol, config, _ = load_solution_dir(args.solution)
    problem = config.build_problem()
    rep = simulate_ensemble(sol, problem.sigma0, problem.tracers, args.particles, args.seed,
                            checkpoints=config.checkpoints)
    path = write_ensemble(args.solution, rep)
    report = {"particles": rep.particles, "seed": rep.seed, "checkpoints": rep.checkpoints.tolist(),
              "relative_error": rep.covariance_error.tolist(), "tracer_error": rep.tracer_error,
              "wall_time_s": rep.wall_time, "file": str(path)}
    Path(args.solution, "ensemble.json").write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps(report, indent=1))
    return EXIT_OK


def cmd_check(args):
    sol, _, _ = load_solution_dir(args.solution)
    config = load_config(args.config)
    if config.n != sol.n:
        raise FileFormatError(f"solution has n={sol.n}, config has n={config.n}")
    items = verify_solution(sol, config.build_problem(), trials=args.trials, seed=args.seed)
    for item in items:
        print(item.line())
    failed = [i.name for i in items if not i.passed]
    if failed:
        raise CheckFailed(failed)
    return EXIT_OK


def cmd_cost(args):
    sol, config, _ = load_solution_dir(args.solution)
    problem = config.build_problem()
    ke = kinetic_cost(sol, problem.sigma0)
    at = attention_cost(sol)
    eps = problem.epsilon
    print(json.dumps({"J_KE": ke, "J_A": at, "epsilon": eps, "total_cost": ke + eps * at}, indent=1))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="tracersteer", description="Tracer-informed covariance steering.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve a scenario by shooting")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="solution directory (default: output.directory of the config)")
    s.set_defaults(func=cmd_solve)
    s = sub.add_parser("simulate", help="Monte Carlo ensemble under a stored solution")
    s.add_argument("--solution", required=True)
    s.add_argument("--particles", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("check", help="re-validate a stored solution")
    s.add_argument("--solution", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--trials", type=int, default=32, help="perturbation trials (0 to skip)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_check)
    s = sub.add_parser("cost", help="recompute costs of a stored solution")
    s.add_argument("--solution", required=True)
    s.set_defaults(func=cmd_cost)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        return args.func(args)
    except (SchemaError, RegimeMismatch, UnknownGenerator) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleSurface as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FileFormatError as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return EXIT_FILE_FORMAT
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except ValueError as exc:
        if args.command == "simulate":
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
