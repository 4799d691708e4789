"""Reading and writing solution directories.

A solution directory holds ``solution.csv`` (the sampled flow),
``summary.json``, ``iterations.csv`` (the shooting log) and
``scenario.json`` (the fully resolved scenario, so later commands need no
config file). Floats are written with 17 significant digits, which
round-trips every finite double exactly.
"""
import csv
import json
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, format_float
from .errors import FileFormatError, SchemaError
from .matops import rotation_angle
from .solution import FlowSolution

SOLUTION = "solution.csv"
SUMMARY = "summary.json"
ITERATIONS = "iterations.csv"
SCENARIO = "scenario.json"
ENSEMBLE = "ensemble.csv"
ITERATION_FIELDS = ["candidate", "start", "iteration", "residual", "damping", "rank", "rank_deficient"]


def solution_header(n):
    idx = [f"{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    return ["t"] + [f"Phi_{k}" for k in idx] + [f"K_{k}" for k in idx] + ["residual_cov", "residual_tracer"]


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else format_float(v) for v in row])


def summary_dict(solution, problem=None):
    out = {
        "problem": solution.problem,
        "converged": bool(solution.converged),
        "iterations": int(solution.iterations),
        "residual_norm": float(solution.residual_norm),
        "J_KE": float(solution.j_ke),
        "J_A": float(solution.j_a),
        "epsilon": float(solution.epsilon),
        "total_cost": float(solution.total_cost),
        "Phi1": np.asarray(solution.phi1).tolist(),
        "candidate": int(solution.candidate),
        "steps": int(solution.steps),
        "P0": None if solution.p0 is None else np.asarray(solution.p0).tolist(),
    }
    if solution.orthogonal_factor is not None:
        out["orthogonal_factor"] = np.asarray(solution.orthogonal_factor).tolist()
        if solution.n == 2:
            out["rotation_deg"] = rotation_angle(solution.orthogonal_factor)
    return out


def write_solution_dir(directory, solution, config, log=None):
    """Write all solve artifacts into ``directory`` (created if needed)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n = solution.n
    rows = [[t, *solution.phi[i].ravel(), *solution.gain[i].ravel(),
             solution.residual_cov[i], solution.residual_tracer[i]]
            for i, t in enumerate(solution.times)]
    _write_rows(d / SOLUTION, solution_header(n), rows)
    write_iterations(d, log if log is not None else solution.log)
    write_summary(d, summary_dict(solution))
    (d / SCENARIO).write_text(json.dumps(config.to_dict(), indent=1))


def write_summary(directory, summary):
    Path(directory, SUMMARY).write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n")


def write_iterations(directory, log):
    rows = [[str(rec.get(k, "")) if k in ("candidate", "start", "rank", "rank_deficient", "iteration")
             else rec.get(k, float("nan")) for k in ITERATION_FIELDS] for rec in (log or [])]
    _write_rows(Path(directory, ITERATIONS), ITERATION_FIELDS, rows)


def write_ensemble(directory, report):
    n = report.target.shape[-1]
    idx = [f"{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    header = ["checkpoint"] + [f"emp_{k}" for k in idx] + [f"target_{k}" for k in idx] + ["rel_error"]
    rows = [[t, *e.ravel(), *g.ravel(), err] for t, e, g, err in
            zip(report.checkpoints, report.empirical, report.target, report.covariance_error)]
    path = Path(directory, ENSEMBLE)
    _write_rows(path, header, rows)
    return path


def load_solution_dir(directory):
    """Return ``(solution, config, summary)`` from a solution directory.

    Raises
    ------
    FileFormatError
        Missing file, wrong header, ragged or non-numeric rows, non-uniform grid.
    """
    d = Path(directory)
    try:
        summary = json.loads((d / SUMMARY).read_text())
        config = ScenarioConfig.from_dict(json.loads((d / SCENARIO).read_text()))
    except (OSError, ValueError, SchemaError) as exc:
        raise FileFormatError(f"{d}: unreadable summary or scenario ({exc})") from None
    n = config.n
    header = solution_header(n)
    try:
        with open(d / SOLUTION, newline="") as fh:
            records = list(csv.reader(fh))
    except OSError as exc:
        raise FileFormatError(f"{d / SOLUTION}: {exc.strerror}") from None
    if not records or records[0] != header:
        raise FileFormatError(f"{d / SOLUTION}: header does not match an n={n} solution")
    body = [r for r in records[1:] if r]
    if any(len(r) != len(header) for r in body):
        raise FileFormatError(f"{d / SOLUTION}: ragged rows")
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError:
        raise FileFormatError(f"{d / SOLUTION}: non-numeric field") from None
    if len(data) < 17:
        raise FileFormatError(f"{d / SOLUTION}: too few rows")
    times = data[:, 0]
    steps = len(times) - 1
    if times[0] != 0.0 or times[-1] != 1.0 or np.max(np.abs(np.diff(times) - 1.0 / steps)) > 1e-12:
        raise FileFormatError(f"{d / SOLUTION}: time column is not a uniform grid on [0, 1]")
    nn = n * n
    phi = data[:, 1:1 + nn].reshape(-1, n, n)
    gain = data[:, 1 + nn:1 + 2 * nn].reshape(-1, n, n)
    if not (np.isfinite(phi).all() and np.isfinite(gain).all()):
        raise FileFormatError(f"{d / SOLUTION}: non-finite Phi or K entries")
    p0 = summary.get("P0")
    sol = FlowSolution(
        times=times, phi=phi, gain=gain, problem=summary.get("problem", "P1" if config.problem == 1 else "P2"),
        epsilon=float(summary.get("epsilon", 0.0)), residual_cov=data[:, -2], residual_tracer=data[:, -1],
        j_ke=float(summary.get("J_KE", np.nan)), j_a=float(summary.get("J_A", np.nan)),
        p0=None if p0 is None else np.array(p0, dtype=float), converged=bool(summary.get("converged")),
        iterations=int(summary.get("iterations", 0)), residual_norm=float(summary.get("residual_norm", np.nan)),
        candidate=int(summary.get("candidate", 0)),
        orthogonal_factor=None if "orthogonal_factor" not in summary else np.array(summary["orthogonal_factor"]))
    return sol, config, summary
