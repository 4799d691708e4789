"""Scenario configuration: TOML schema, validation and problem construction.

A scenario is a single TOML document::

    problem = 1                      # 1: covariance path + tracer endpoints
                                     # 3: endpoint covariances + tracer trajectory
    sigma0 = [[1.0, 0.0], [0.0, 1.0]]
    sigma1 = [[2.0, 1.4142135623730951], [1.4142135623730951, 2.0]]
    epsilon = 1.0                    # problem 3 only, default 1.0

    [covariance_path]                # problem 1 only
    kind = "mccann"                  # or "samples" with file = "sigma.csv"

    [tracers]
    kind = "endpoints"               # y0, y1 as n x m matrices
    # kind = "trajectory" with file = "y.csv" or generator = "spiral" + [tracers.params]

    [integrator]
    steps = 2000

    [shooting]
    tol = 1e-9
    max_iter = 100
    multistart = 8
    seed = 0

    [output]
    directory = "out"
    checkpoints = [0.0, 0.25, 0.5, 0.75, 1.0]

Sample files are CSV with a header row: ``t`` followed by the row-major
matrix entries. Relative paths resolve against the config file directory.
"""
import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .errors import FileFormatError, RegimeMismatch, SchemaError, UnknownGenerator
from .matops import check_spd
from .necessary_p1 import Problem1
from .necessary_p2 import Problem3
from .paths import (TracerEndpoints, mccann_path, sampled_covariance_path,
                    sampled_tracer_path, tracer_trajectory)
from .shoot import IntegratorGrid, ShootingOptions

DEFAULT_CHECKPOINTS = [0.0, 0.25, 0.5, 0.75, 1.0]
_SECTIONS = {"covariance_path", "tracers", "integrator", "shooting", "output"}
_TOP = {"problem", "n", "m", "sigma0", "sigma1", "epsilon"} | _SECTIONS


def spiral(rho=math.sqrt(3.0), theta1=-120.0, y0=(-math.sqrt(3.0) / 2, 0.5)):
    """Planar spiral ``y_t = r(t) R(theta(t)) y0``.

    ``r(t) = (1 - t) + t rho`` and ``theta(t) = t theta1`` (degrees), with
    ``R(theta) = [[cos, sin], [-sin, cos]]``, the same orientation used for
    orthogonal factors elsewhere in the package.
    """
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if y0.shape != (2,):
        raise SchemaError("tracers.params.y0: spiral needs a 2-vector")
    w = math.radians(theta1)

    def func(t):
        th = w * t
        c, s = math.cos(th), math.sin(th)
        rot = np.array([[c, s], [-s, c]])
        drot = np.array([[-s, c], [-c, -s]]) * w
        r = (1.0 - t) + t * rho
        y = r * rot @ y0
        ydot = (rho - 1.0) * rot @ y0 + r * drot @ y0
        return y[:, None], ydot[:, None]

    return tracer_trajectory(func, name="spiral")


GENERATORS = {"spiral": spiral}


def builtin_tracer_generator(name, params=None):
    """Tracer trajectory from a named generator; currently only ``"spiral"``."""
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise UnknownGenerator(f"unknown tracer generator {name!r}; known: {sorted(GENERATORS)}")
    try:
        return gen(**(params or {}))
    except TypeError as exc:
        raise SchemaError(f"tracers.params: {exc}") from None


def read_samples(path, rows, cols):
    """Read a sample-node CSV into ``[(t, matrix)]``."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            records = list(csv.reader(fh))
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc.strerror}") from None
    if not records or records[0][:1] != ["t"]:
        raise FileFormatError(f"{path}: header must start with 't'")
    width = 1 + rows * cols
    nodes = []
    for line, rec in enumerate(records[1:], start=2):
        if not rec:
            continue
        if len(rec) != width:
            raise FileFormatError(f"{path}:{line}: expected {width} fields, got {len(rec)}")
        try:
            vals = [float(v) for v in rec]
        except ValueError:
            raise FileFormatError(f"{path}:{line}: non-numeric field") from None
        nodes.append((vals[0], np.array(vals[1:]).reshape(rows, cols)))
    return nodes


def write_samples(path, nodes):
    """Write ``[(t, matrix)]`` as a sample-node CSV (17 significant digits)."""
    nodes = list(nodes)
    rows, cols = np.shape(nodes[0][1])
    header = ["t"] + [f"x_{i + 1}{j + 1}" for i in range(rows) for j in range(cols)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t, a in nodes:
            w.writerow([format_float(t)] + [format_float(v) for v in np.ravel(a)])


def format_float(x):
    return f"{float(x):.17g}"


@dataclass
class ScenarioConfig:
    """Validated scenario; sample data are held inline, not as file references."""

    problem: int
    n: int
    m: int
    sigma0: list
    sigma1: list
    covariance_path: dict = None
    tracers: dict = None
    epsilon: float = 1.0
    steps: int = 2000
    tol: float = 1e-9
    max_iter: int = 100
    multistart: int = 8
    seed: int = 0
    directory: str = "out"
    checkpoints: list = field(default_factory=lambda: list(DEFAULT_CHECKPOINTS))

    def build_problem(self):
        """The :class:`Problem1` or :class:`Problem3` instance described by this config."""
        if self.problem == 1:
            cp = self.covariance_path
            if cp["kind"] == "mccann":
                path = mccann_path(self.sigma0, self.sigma1)
            else:
                path = sampled_covariance_path([(t, np.array(a)) for t, a in cp["nodes"]])
            return Problem1(path, TracerEndpoints(self.tracers["y0"], self.tracers["y1"]))
        tr = self.tracers
        if "generator" in tr:
            path = builtin_tracer_generator(tr["generator"], tr.get("params"))
        else:
            path = sampled_tracer_path([(t, np.array(y)) for t, y in tr["nodes"]])
        return Problem3(np.array(self.sigma0), np.array(self.sigma1), path, self.epsilon)

    @property
    def grid(self):
        return IntegratorGrid(self.steps)

    @property
    def options(self):
        return ShootingOptions(residual_tol=self.tol, max_iterations=self.max_iter,
                               multistart=self.multistart, seed=self.seed)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as exc:
            raise SchemaError(str(exc)) from None


def load_config(path):
    """Parse the TOML file at ``path``; relative sample paths resolve next to it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"{path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)


def parse_config(text, base_dir="."):
    """Validate a TOML scenario document and fill defaults.

    Raises
    ------
    SchemaError
        Malformed document, missing or ill-typed field; the message names the field.
    RegimeMismatch
        Data inconsistent with the chosen problem (e.g. problem 1 with a
        tracer trajectory, problem 3 with a covariance path).
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise SchemaError(f"not valid TOML: {exc}") from None
    base_dir = Path(base_dir)
    unknown = set(doc) - _TOP
    if unknown:
        raise SchemaError(f"unknown field(s): {', '.join(sorted(unknown))}")
    problem = _get(doc, "problem", int, required=True)
    if problem not in (1, 3):
        raise SchemaError("problem: must be 1 or 3")
    cp = doc.get("covariance_path")
    tr = _section(doc, "tracers", required=True)
    cfg = {"problem": problem}

    if problem == 1:
        if cp is None:
            raise RegimeMismatch("problem 1 needs a [covariance_path] section")
        if tr.get("kind") != "endpoints":
            raise RegimeMismatch("problem 1 needs tracer endpoints (tracers.kind = \"endpoints\")")
        if "epsilon" in doc:
            raise RegimeMismatch("epsilon applies to problem 3 only")
    else:
        if cp is not None:
            raise RegimeMismatch("problem 3 takes endpoint covariances, not a covariance path")
        if tr.get("kind") != "trajectory":
            raise RegimeMismatch("problem 3 needs a tracer trajectory (tracers.kind = \"trajectory\")")

    sampled = problem == 1 and isinstance(cp, dict) and cp.get("kind") == "samples"
    sig0 = _matrix(doc, "sigma0", required=not sampled)
    sig1 = _matrix(doc, "sigma1", required=not sampled)
    n = _get(doc, "n", int)
    if n is None:
        n = len(sig0) if sig0 is not None else None

    if problem == 1:
        if not isinstance(cp, dict):
            raise SchemaError("covariance_path: must be a table")
        kind = cp.get("kind")
        if kind == "mccann":
            cfg["covariance_path"] = {"kind": "mccann"}
        elif kind == "samples":
            f = _get(cp, "file", str, required=True, where="covariance_path.")
            if n is None:
                raise SchemaError("n: required when sigma0 is omitted")
            nodes = read_samples(base_dir / f, n, n)
            if len(nodes) < 2:
                raise SchemaError("covariance_path.file: need at least two nodes")
            if sig0 is None:
                sig0 = nodes[0][1].tolist()
            if sig1 is None:
                sig1 = nodes[-1][1].tolist()
            for name, given, node in (("sigma0", sig0, nodes[0]), ("sigma1", sig1, nodes[-1])):
                if not np.allclose(given, node[1], rtol=0, atol=1e-12):
                    raise SchemaError(f"{name}: disagrees with the sampled path endpoint")
            cfg["covariance_path"] = {"kind": "samples", "nodes": [(t, a.tolist()) for t, a in nodes]}
        else:
            raise SchemaError("covariance_path.kind: must be \"mccann\" or \"samples\"")
        y0 = _matrix(tr, "y0", required=True, where="tracers.")
        y1 = _matrix(tr, "y1", required=True, where="tracers.")
        cfg["tracers"] = {"kind": "endpoints", "y0": y0, "y1": y1}
        m = len(y0[0])
    else:
        eps = _get(doc, "epsilon", float, default=1.0)
        if not eps > 0:
            raise SchemaError("epsilon: must be positive for problem 3")
        cfg["epsilon"] = eps
        if "generator" in tr and "file" in tr:
            raise SchemaError("tracers: give either generator or file, not both")
        if "generator" in tr:
            params = tr.get("params", {})
            if not isinstance(params, dict):
                raise SchemaError("tracers.params: must be a table")
            cfg["tracers"] = {"kind": "trajectory", "generator": _get(tr, "generator", str, where="tracers."),
                              "params": params}
            path = builtin_tracer_generator(cfg["tracers"]["generator"], params)
            m = path.m
        elif "file" in tr:
            m = _get(doc, "m", int)
            if m is None or n is None:
                raise SchemaError("m: required with a sampled tracer trajectory")
            nodes = read_samples(base_dir / _get(tr, "file", str, where="tracers."), n, m)
            cfg["tracers"] = {"kind": "trajectory", "nodes": [(t, y.tolist()) for t, y in nodes]}
        else:
            raise SchemaError("tracers: trajectory needs generator or file")

    for name, val in (("sigma0", sig0), ("sigma1", sig1)):
        try:
            check_spd(np.array(val), name)
        except ValueError as exc:
            raise SchemaError(f"{name}: {exc}") from None
        if np.shape(val) != (n, n):
            raise SchemaError(f"{name}: expected a {n}x{n} matrix")
    m_given = _get(doc, "m", int)
    if m_given is not None and m_given != m:
        raise SchemaError(f"m: says {m_given} but tracer data have {m} column(s)")
    if not 0 < m < n:
        raise SchemaError(f"m: need 0 < m < n, got m={m}, n={n}")
    cfg.update(n=n, m=m, sigma0=sig0, sigma1=sig1)

    integ = _section(doc, "integrator")
    cfg["steps"] = _get(integ, "steps", int, default=2000, where="integrator.")
    if cfg["steps"] < 16 or cfg["steps"] % 8:
        raise SchemaError("integrator.steps: must be a multiple of 8 and at least 16")
    sh = _section(doc, "shooting")
    cfg["tol"] = _get(sh, "tol", float, default=1e-9, where="shooting.")
    cfg["max_iter"] = _get(sh, "max_iter", int, default=100, where="shooting.")
    cfg["multistart"] = _get(sh, "multistart", int, default=8, where="shooting.")
    cfg["seed"] = _get(sh, "seed", int, default=0, where="shooting.")
    out = _section(doc, "output")
    cfg["directory"] = _get(out, "directory", str, default="out", where="output.")
    cps = out.get("checkpoints", DEFAULT_CHECKPOINTS)
    if not isinstance(cps, list) or not all(isinstance(c, (int, float)) and 0 <= c <= 1 for c in cps):
        raise SchemaError("output.checkpoints: must be a list of times in [0, 1]")
    cfg["checkpoints"] = [float(c) for c in cps]
    try:
        ScenarioConfig(**cfg).build_problem()
    except (SchemaError, RegimeMismatch, UnknownGenerator):
        raise
    except ValueError as exc:
        raise SchemaError(f"invalid scenario data: {exc}") from None
    return ScenarioConfig(**cfg)


def _section(doc, name, required=False):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise SchemaError(f"{name}: missing section")
        return {}
    if not isinstance(sec, dict):
        raise SchemaError(f"{name}: must be a table")
    return sec


def _get(doc, key, typ, required=False, default=None, where=""):
    if key not in doc:
        if required:
            raise SchemaError(f"{where}{key}: missing")
        return default
    val = doc[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, typ) or isinstance(val, bool):
        raise SchemaError(f"{where}{key}: expected {typ.__name__}")
    return val


def _matrix(doc, key, required=False, where=""):
    if key not in doc:
        if required:
            raise SchemaError(f"{where}{key}: missing")
        return None
    val = doc[key]
    ok = (isinstance(val, list) and val and all(isinstance(r, list) and r for r in val)
          and len({len(r) for r in val}) == 1
          and all(isinstance(x, (int, float)) and not isinstance(x, bool) for r in val for x in r))
    if not ok:
        raise SchemaError(f"{where}{key}: expected a rectangular numeric matrix")
    return [[float(x) for x in r] for r in val]
