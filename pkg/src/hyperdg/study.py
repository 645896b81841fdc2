"""Built-in test problems, study configuration, p-convergence sweeps and rate fits."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import stats

from .dg import ProblemSpec, SolverError, constant_field, constant_scalar, solve
from .mesh import check_admissible, gen_structured, load_mesh
from .norms import dg_error
from .orthopoly import dim_poly
from .projectors import cdg_project, embed_outflow, l2_project
from .quadrature import composite_refine, graded_interval_rule, simplex_rule

log = logging.getLogger(__name__)

CASES = ("testcase1", "testcase2", "manufactured", "projector_study")
SOLVERS = ("sweep", "global", "auto")
CSV_HEADER = ("p", "error_l2", "error_dg", "dofs", "wall_time_s", "solver", "residual")
PROJECTOR_HEADER = ("p", "cdg_l2_error", "cdg_outflow_trace_error", "cdg_inflow_trace_error",
                    "l2proj_trace_error")
P_MAX = 40


class ConfigError(ValueError):
    pass


class RateFitError(ValueError):
    pass


# {{{ exact solutions and problem data

def _kink_part(x, alpha):
    xp = np.maximum(x, 0.0)
    return xp ** alpha


def _kink_deriv(x, alpha):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = alpha * x[pos] ** (alpha - 1.0)
    return out


def singular_solution(alpha):
    """u = cos(pi y / 2) + max(x, 0)^alpha and its gradient."""

    def u(x):
        return np.cos(0.5 * np.pi * x[:, 1]) + _kink_part(x[:, 0], alpha)

    def grad(x):
        return np.stack([_kink_deriv(x[:, 0], alpha), -0.5 * np.pi * np.sin(0.5 * np.pi * x[:, 1])], axis=1)

    return u, grad


def _source(beta, c, grad, u):
    def f(x):
        return np.einsum("qd,qd->q", np.asarray(beta(x)), grad(x)) + c(x) * u(x)

    return f


def build_testcase1(alpha):
    """beta = (1, 1), c = 1, exact solution with a kink of strength alpha along x = 0."""
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    u, grad = singular_solution(alpha)
    beta = constant_field([1.0, 1.0])
    c = constant_scalar(1.0)
    spec = ProblemSpec(2, beta, c, _source(beta, c, grad, u), u, cbar0=1.0, beta_constant=True,
                       c_constant=True, singular_x=0.0, name=f"testcase1(alpha={alpha})")
    return spec, u


def build_testcase2(alpha):
    """beta = (2 - y^2, 2 - x), c = 1 + (1 + x)(1 + y^2); divergence-free beta."""
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    u, grad = singular_solution(alpha)

    def beta(x):
        return np.stack([2.0 - x[:, 1] ** 2, 2.0 - x[:, 0]], axis=1)

    def c(x):
        return 1.0 + (1.0 + x[:, 0]) * (1.0 + x[:, 1] ** 2)

    spec = ProblemSpec(2, beta, c, _source(beta, c, grad, u), u, cbar0=1.0,
                       div_beta=lambda x: np.zeros(len(x)), singular_x=0.0,
                       name=f"testcase2(alpha={alpha})")
    return spec, u


def manufactured_coefficients(degree):
    """Fixed monomial coefficients C[a, b] of x^a y^b, a + b <= degree."""
    C = np.zeros((degree + 1, degree + 1))
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            C[a, b] = (-1.0) ** (a + b) / (1.0 + a + 0.5 * b)
    return C


def build_manufactured(degree=3):
    """Polynomial exact solution of total degree ``degree`` with beta = (1, 1), c = 1."""
    C = manufactured_coefficients(degree)
    Cx = P.polyder(C, axis=0)
    Cy = P.polyder(C, axis=1)

    def u(x):
        return P.polyval2d(x[:, 0], x[:, 1], C)

    def grad(x):
        return np.stack([P.polyval2d(x[:, 0], x[:, 1], Cx), P.polyval2d(x[:, 0], x[:, 1], Cy)], axis=1)

    beta = constant_field([1.0, 1.0])
    c = constant_scalar(1.0)
    spec = ProblemSpec(2, beta, c, _source(beta, c, grad, u), u, cbar0=1.0, beta_constant=True,
                       c_constant=True, name=f"manufactured(degree={degree})")
    return spec, u


MANUFACTURED_DEGREE = 3

# }}}


# {{{ configuration

@dataclass
class StudyConfig:
    case: str
    alpha: float = 2.5
    mesh: object = field(default_factory=lambda: {"nx": 4, "ny": 4, "diagonal": "against_flow"})
    p_range: tuple = (1, 24)
    solver: str = "auto"
    quadrature_margin: int = 4
    singular_refine_levels: int | None = None
    output: str | None = None

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"case must be one of {CASES}, got {self.case!r}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        try:
            self.alpha = float(self.alpha)
            lo, hi = (int(v) for v in self.p_range)
        except (TypeError, ValueError) as exc:
            raise ConfigError("alpha must be a number and p_range a pair of integers") from exc
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if not 1 <= lo <= hi <= P_MAX:
            raise ConfigError(f"p_range must satisfy 1 <= pmin <= pmax <= {P_MAX}")
        self.p_range = (lo, hi)
        if self.quadrature_margin < 0:
            raise ConfigError("quadrature_margin must be nonnegative")
        if isinstance(self.mesh, dict):
            unknown = set(self.mesh) - {"nx", "ny", "diagonal"}
            if unknown or not {"nx", "ny"} <= set(self.mesh):
                raise ConfigError("generated mesh needs keys nx, ny and optional diagonal")
        elif not isinstance(self.mesh, str):
            raise ConfigError("mesh must be a file path or a generator object")

    @property
    def degrees(self):
        return range(self.p_range[0], self.p_range[1] + 1)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["p_range"] = list(self.p_range)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "case" not in d:
            raise ConfigError("config needs a 'case'")
        d = dict(d)
        if "p_range" in d:
            d["p_range"] = tuple(d["p_range"])
        if isinstance(d.get("mesh"), dict):
            d["mesh"] = dict(d["mesh"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "StudyConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "StudyConfig":
        with open(path) as fh:
            cfg = cls.from_json(fh.read())
        # relative mesh paths are relative to the config file
        if isinstance(cfg.mesh, str) and not os.path.isabs(cfg.mesh):
            cfg.mesh = os.path.join(os.path.dirname(os.path.abspath(path)), cfg.mesh)
        return cfg


def make_mesh(cfg: StudyConfig):
    if isinstance(cfg.mesh, dict):
        return gen_structured(int(cfg.mesh["nx"]), int(cfg.mesh["ny"]),
                              cfg.mesh.get("diagonal", "against_flow"))
    with open(cfg.mesh) as fh:
        return load_mesh(fh)


def make_problem(cfg: StudyConfig):
    if cfg.case == "testcase1":
        return build_testcase1(cfg.alpha)
    if cfg.case == "testcase2":
        return build_testcase2(cfg.alpha)
    if cfg.case == "manufactured":
        return build_manufactured(MANUFACTURED_DEGREE)
    raise ConfigError(f"case {cfg.case!r} has no DG problem")

# }}}


# {{{ convergence sweeps

@dataclass(frozen=True)
class ConvergenceRecord:
    p: int
    error_l2: float
    error_dg: float
    dofs: int
    wall_time: float
    solver_used: str
    residual: float

    def row(self) -> list:
        return [str(self.p), fmt_float(self.error_l2), fmt_float(self.error_dg), str(self.dofs),
                fmt_float(self.wall_time), self.solver_used, fmt_float(self.residual)]


def fmt_float(x: float) -> str:
    """Decimal notation with 17 significant digits."""
    if not math.isfinite(x):
        return repr(float(x))
    return np.format_float_positional(x, precision=17, unique=False, fractional=False, trim="k")


def _write_atomic(path, text) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv_atomic(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _write_atomic(path, buf.getvalue())


def run_metadata(cfg: StudyConfig) -> dict:
    """Quadrature policy per degree, so a CSV can be regenerated exactly."""
    quad = {}
    for p in cfg.degrees:
        deg = 2 * p + cfg.quadrature_margin
        levels = max(8, p) if cfg.singular_refine_levels is None else cfg.singular_refine_levels
        quad[str(p)] = {"volume_degree": deg, "facet_degree": deg, "singular_refine_levels": levels}
    return {"config": cfg.to_dict(), "quadrature": quad}


def write_metadata(out, cfg: StudyConfig) -> str:
    path = str(out) + ".meta.json"
    _write_atomic(path, json.dumps(run_metadata(cfg), indent=2, sort_keys=True) + "\n")
    return path


def read_records(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [ConvergenceRecord(int(r["p"]), float(r["error_l2"]), float(r["error_dg"]),
                                  int(r["dofs"]), float(r["wall_time_s"]), r["solver"],
                                  float(r["residual"])) for r in reader]


def run_one(mesh, p, spec, exact, cfg: StudyConfig) -> ConvergenceRecord:
    t0 = time.perf_counter()
    sol = solve(mesh, p, spec, solver=cfg.solver, margin=cfg.quadrature_margin,
                refine_levels=cfg.singular_refine_levels)
    rep = dg_error(sol, exact, spec)
    dofs = mesh.n_elements * dim_poly(2, p)
    return ConvergenceRecord(p, rep.l2_error, rep.dg_error, dofs, time.perf_counter() - t0,
                             sol.solver, sol.residual)


def run_convergence(cfg: StudyConfig, out=None) -> list:
    """Solve for every p in the configured range; write the CSV if a path is given."""
    mesh = make_mesh(cfg)
    spec, exact = make_problem(cfg)
    if cfg.solver == "sweep":
        if not spec.beta_constant or not check_admissible(mesh, spec.beta_vector).verdict:
            raise ConfigError("mesh is not admissible for an element sweep; use solver='auto'")
    records = []
    for p in cfg.degrees:
        try:
            rec = run_one(mesh, p, spec, exact, cfg)
        except (SolverError, np.linalg.LinAlgError) as exc:
            log.warning("p=%d failed: %s", p, exc)
            rec = ConvergenceRecord(p, math.nan, math.nan, mesh.n_elements * dim_poly(2, p), 0.0,
                                    "failed", math.nan)
        log.info("p=%d l2=%.3e dg=%.3e (%s, %.2fs)", p, rec.error_l2, rec.error_dg,
                 rec.solver_used, rec.wall_time)
        records.append(rec)
    out = out or cfg.output
    if out:
        write_csv_atomic(out, CSV_HEADER, [r.row() for r in records])
        write_metadata(out, cfg)
    return records


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple


def fit_power_law(p, err, window=None) -> RateFit:
    """Least-squares fit of log(err) against log(p) over ``window`` (inclusive)."""
    p = np.asarray(p, dtype=float)
    err = np.asarray(err, dtype=float)
    if window is None:
        ps = np.sort(p)
        lo = max(8, int(ps[0])) if ps[-1] >= 10 else int(ps[len(ps) // 2])
        window = (lo, int(ps[-1]))
    sel = (p >= window[0]) & (p <= window[1])
    if sel.sum() < 3:
        raise RateFitError(f"need at least 3 records in window {tuple(window)}, have {int(sel.sum())}")
    if not np.all(err[sel] > 0):
        raise RateFitError("errors in the fit window must be positive")
    res = stats.linregress(np.log(p[sel]), np.log(err[sel]))
    return RateFit(float(res.slope), float(res.intercept), float(min(1.0, res.rvalue ** 2)),
                   (int(window[0]), int(window[1])))


def fit_rate(records, window=None, which="l2") -> RateFit:
    """Rate of error_l2 or error_dg against p for convergence records."""
    if which not in ("l2", "dg"):
        raise ValueError("which must be 'l2' or 'dg'")
    p = [r.p for r in records]
    err = [r.error_l2 if which == "l2" else r.error_dg for r in records]
    return fit_power_law(p, err, window)

# }}}


# {{{ projector study on the reference triangle

@dataclass(frozen=True)
class ProjectorRecord:
    p: int
    cdg_l2_error: float
    cdg_outflow_trace_error: float
    cdg_inflow_trace_error: float
    l2proj_trace_error: float

    def row(self) -> list:
        return [str(self.p)] + [fmt_float(v) for v in dataclasses.astuple(self)[1:]]


_INFLOW_LEGS = (((1.0, -1.0), (0.0, 1.0)), ((0.0, 1.0), (-1.0, -1.0)))


def _leg_rule(a, b, n, levels, x0=0.0):
    a, b = np.asarray(a), np.asarray(b)
    dx = b[0] - a[0]
    bp = None if abs(dx) < 1e-14 else 2 * (x0 - a[0]) / dx - 1
    r = graded_interval_rule(n, bp if bp is not None and -1 <= bp <= 1 else None, levels)
    s = r.points[:, 0]
    pts = (1 - s)[:, None] / 2 * a + (1 + s)[:, None] / 2 * b
    return pts, r.weights * np.linalg.norm(b - a) / 2


def projector_errors(f, p, levels=None, margin=4):
    """Errors of the CDG and L2 projections of f on the reference triangle.

    Columns: CDG error in L2(T), on the outflow facet, on the two inflow
    facets together, and the L2 projection's error on the outflow facet.
    f may be non-smooth across x = 0; all rules are graded toward that line.
    """
    levels = max(8, p) if levels is None else levels
    base = simplex_rule(2, 2 * p + margin)
    vol = composite_refine(base, 0.0, levels)
    n = base.n_per_dir
    fr = graded_interval_rule(n, 0.0, levels)  # outflow facet [-1,1] x {-1} meets x = 0 at s = 0
    cdg = cdg_project(f, None, p, vol, facet_rule=fr)
    l2 = l2_project(f, None, p, vol)
    err_vol = f(vol.points) - cdg(vol.points)
    l2_err = math.sqrt(float(np.dot(vol.weights, err_vol ** 2)))
    opts = embed_outflow(fr.points, 2)
    fo = f(opts)
    out_err = math.sqrt(float(np.dot(fr.weights, (fo - cdg(opts)) ** 2)))
    l2_out_err = math.sqrt(float(np.dot(fr.weights, (fo - l2(opts)) ** 2)))
    in_sq = 0.0
    for a, b in _INFLOW_LEGS:
        pts, w = _leg_rule(a, b, n, levels)
        in_sq += float(np.dot(w, (f(pts) - cdg(pts)) ** 2))
    return ProjectorRecord(p, l2_err, out_err, math.sqrt(in_sq), l2_out_err)


def run_projector_study(cfg: StudyConfig, out=None) -> list:
    alpha = cfg.alpha

    def f(x):
        return _kink_part(x[:, 0], alpha)

    records = [projector_errors(f, p, cfg.singular_refine_levels, cfg.quadrature_margin)
               for p in cfg.degrees]
    out = out or cfg.output
    if out:
        write_csv_atomic(out, PROJECTOR_HEADER, [r.row() for r in records])
        write_metadata(out, cfg)
    return records


def fit_columns(records, column, window=None) -> RateFit:
    """Rate fit for one error column of projector records."""
    return fit_power_law([r.p for r in records], [getattr(r, column) for r in records], window)

# }}}
