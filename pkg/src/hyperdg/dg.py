"""Upwind DG discretization of beta . grad u + c u = f, u = g on the inflow boundary.

Bilinear form (test v, trial u)::

    B(u, v) = (beta . grad_h u + c u, v)
              - sum_T (u_T - u_up, n_T . beta v_T) on the interior inflow part of dT
              - (u, n . beta v) on Gamma_-

and the right-hand side ``(f, v) - (g, n . beta v)`` on Gamma_-.  The inflow
part of a facet is decided pointwise by the sign of n . beta at each facet
quadrature point, which coincides with the facet classification whenever
beta is constant.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import CHAR_TOL, AffineMap, Mesh, affine_map, check_admissible
from .orthopoly import build_basis
from .projectors import ModalCoeffs
from .quadrature import composite_refine, graded_interval_rule, interval_rule, simplex_rule

log = logging.getLogger(__name__)

# basis evaluation on refined rules is chunked to bound memory
_CHUNK = 8192


class SolverError(RuntimeError):
    def __init__(self, msg, residual_history=()):
        super().__init__(msg)
        self.residual_history = list(residual_history)


class MissingTraceError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of the steady transport problem on a 2D domain.

    Fields are callables on point arrays of shape (n, dim); ``beta`` returns
    (n, dim), the others (n,).  ``singular_x`` marks a line x = const across
    which the data are not smooth; quadrature is graded toward it.
    """

    dim: int
    beta: object
    c: object
    f: object
    g: object
    cbar0: float
    beta_constant: bool = False
    c_constant: bool = False
    div_beta: object = None
    singular_x: float | None = None
    name: str = ""

    def __post_init__(self):
        if not self.cbar0 > 0:
            raise ValueError("cbar0 must be positive (c - div(beta)/2 >= cbar0 > 0)")
        if self.beta_constant:
            probe = np.array([[0.0] * self.dim, [0.3] * self.dim, [-0.7] + [0.2] * (self.dim - 1)])
            vals = np.asarray(self.beta(probe), dtype=float)
            if not np.allclose(vals, vals[0], rtol=0, atol=1e-14):
                raise ValueError("beta_constant is set but beta varies")

    @property
    def beta_vector(self) -> np.ndarray:
        if not self.beta_constant:
            raise ValueError("beta is not constant")
        return np.asarray(self.beta(np.zeros((1, self.dim))), dtype=float).reshape(self.dim)

    def cbar(self, x) -> np.ndarray:
        c = np.asarray(self.c(x), dtype=float).reshape(len(x))
        if self.div_beta is None:
            return c
        return c - 0.5 * np.asarray(self.div_beta(x), dtype=float).reshape(len(x))


def constant_field(vec):
    vec = np.asarray(vec, dtype=float)

    def beta(x):
        return np.broadcast_to(vec, (len(x), len(vec))).copy()

    beta.constant = True
    return beta


def constant_scalar(value):
    def fn(x):
        return np.full(len(x), float(value))

    return fn


@dataclass(eq=False)
class FacetData:
    k: int  # reference facet id
    facet_id: int
    neighbor: int  # -1 on the boundary
    xi: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)  # physical weights
    normal: np.ndarray = field(repr=False)
    nbeta: np.ndarray = field(repr=False)
    inflow: np.ndarray = field(repr=False)  # pointwise mask
    V: np.ndarray = field(repr=False)
    VN: np.ndarray | None = field(default=None, repr=False)
    xiN: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_boundary(self) -> bool:
        return self.neighbor < 0

    @property
    def has_inflow(self) -> bool:
        return bool(self.inflow.any())


@dataclass(eq=False)
class ElementData:
    element: int
    amap: AffineMap
    x: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    vol_matrix: np.ndarray = field(repr=False)
    facets: list = field(repr=False)


def _touches_line(pts: np.ndarray, x0: float, tol: float = 1e-12) -> bool:
    return pts[:, 0].min() - tol <= x0 <= pts[:, 0].max() + tol


def _eval_chunked(basis, pts):
    if len(pts) <= _CHUNK:
        return basis.eval(pts)
    return np.vstack([basis.eval(pts[i:i + _CHUNK]) for i in range(0, len(pts), _CHUNK)])


class Discretization:
    """Per-element geometry, quadrature and local operators for one (mesh, p, spec)."""

    def __init__(self, mesh: Mesh, p: int, spec: ProblemSpec, margin: int = 4,
                 refine_levels: int | None = None, align: bool | None = None):
        if mesh.dim != 2 or spec.dim != 2:
            raise ValueError("the DG solver is implemented on triangular meshes")
        self.mesh, self.p, self.spec, self.margin = mesh, p, spec, margin
        self.refine_levels = max(8, p) if refine_levels is None else refine_levels
        self.basis = build_basis(2, p)
        self.rule = simplex_rule(2, 2 * p + margin)
        self.facet_rule = interval_rule(2 * p + margin)
        self.V = self.basis.eval(self.rule.points)
        self.Gref = self.basis.grad(self.rule.points)
        if align is None:
            align = spec.beta_constant and check_admissible(mesh, spec.beta_vector).a1_ok.all()
        self.aligned = bool(align)
        beta_vec = spec.beta_vector if self.aligned else None
        self.maps = [affine_map(mesh, e, beta_vec) for e in range(mesh.n_elements)]
        self._ref_facets = [self._reference_facet(k) for k in range(3)]
        self.elements = [self._element_data(e) for e in range(mesh.n_elements)]
        self._source_cache = {}

    @property
    def n_basis(self) -> int:
        return len(self.basis)

    def _reference_facet(self, k):
        R = np.delete(np.array([[-1.0, -1.0], [1.0, -1.0], [0.0, 1.0]]), k, axis=0)
        s = self.facet_rule.points[:, 0]
        xi = (1 - s)[:, None] / 2 * R[0] + (1 + s)[:, None] / 2 * R[1]
        return xi, self.facet_rule.weights / 2, self.basis.eval(xi)

    def _element_data(self, e):
        amap = self.maps[e]
        spec = self.spec
        x = amap.forward(self.rule.points)
        W = self.rule.weights * amap.jacobian
        beta = np.asarray(spec.beta(x), dtype=float)
        c = np.asarray(spec.c(x), dtype=float).reshape(len(x))
        Ainv = np.linalg.inv(amap.A)
        # beta . grad phi = (A^{-1} beta) . grad_ref phi
        bref = beta @ Ainv.T
        adv = np.einsum("qd,qjd->qj", bref, self.Gref)
        vol = self.V.T @ (W[:, None] * (adv + c[:, None] * self.V))
        facets = []
        for k in range(3):
            xi, wref, Vf = self._ref_facets[k]
            xf = amap.forward(xi)
            w = wref * amap.facet_measures[k]
            nrm = amap.normals[k]
            bf = np.asarray(spec.beta(xf), dtype=float)
            nb = bf @ nrm
            inflow = nb < -CHAR_TOL * np.linalg.norm(bf, axis=1)
            fid = amap.facet_ids[k]
            nbr = self.mesh.neighbor(e, fid) if not self.mesh.is_boundary_facet(fid) else -1
            fd = FacetData(k, fid, nbr, xi, xf, w, nrm, nb, inflow, Vf)
            facets.append(fd)
            vol -= Vf.T @ ((w * nb * inflow)[:, None] * Vf)
        return ElementData(e, amap, x, W, vol, facets)

    def _neighbor_trace_basis(self, fd: FacetData):
        if fd.VN is None:
            fd.xiN = self.maps[fd.neighbor].inverse(fd.x)
            fd.VN = self.basis.eval(fd.xiN)
        return fd.VN

    # {{{ quadrature policy for non-smooth data

    def volume_rule(self, e):
        """Reference rule and basis values for integrating non-smooth data on e."""
        x0 = self.spec.singular_x
        amap = self.maps[e]
        if x0 is not None and _touches_line(amap.vertices, x0):
            r = composite_refine(self.rule, x0, self.refine_levels, amap)
            return r, None
        return self.rule, self.V

    def facet_quadrature(self, e, k):
        """(reference points, physical points, physical weights) on facet k of e,
        graded toward the singular line when the facet meets it."""
        x0 = self.spec.singular_x
        amap = self.maps[e]
        fd = self.elements[e].facets[k]
        if x0 is None:
            return fd.xi, fd.x, fd.w
        ends = np.delete(amap.vertices, k, axis=0)
        if not _touches_line(ends, x0):
            return fd.xi, fd.x, fd.w
        dx = ends[1, 0] - ends[0, 0]
        if abs(dx) < 1e-14:
            bp = None  # facet lies on the line: the trace is one-sided smooth
        else:
            bp = float(np.clip(2 * (x0 - ends[0, 0]) / dx - 1, -1.0, 1.0))
        r = graded_interval_rule(self.facet_rule.n_per_dir, bp, self.refine_levels)
        s = r.points[:, 0]
        R = np.delete(np.array([[-1.0, -1.0], [1.0, -1.0], [0.0, 1.0]]), k, axis=0)
        xi = (1 - s)[:, None] / 2 * R[0] + (1 + s)[:, None] / 2 * R[1]
        return xi, amap.forward(xi), r.weights / 2 * amap.facet_measures[k]

    # }}}

    def source_vector(self, e, f=None) -> np.ndarray:
        """(f, phi_i)_T with quadrature graded toward the singular line."""
        if f is None:
            if e not in self._source_cache:
                self._source_cache[e] = self._source_vector(e, self.spec.f)
            return self._source_cache[e].copy()
        return self._source_vector(e, f)

    def _source_vector(self, e, f):
        rule, V = self.volume_rule(e)
        amap = self.maps[e]
        if V is not None:
            x = self.elements[e].x
            return V.T @ (self.elements[e].W * np.asarray(f(x), dtype=float).reshape(-1))
        out = np.zeros(self.n_basis)
        for i in range(0, len(rule.weights), _CHUNK):
            pts = rule.points[i:i + _CHUNK]
            x = amap.forward(pts)
            fv = np.asarray(f(x), dtype=float).reshape(-1)
            out += self.basis.eval(pts).T @ (rule.weights[i:i + _CHUNK] * amap.jacobian * fv)
        return out

    def boundary_vector(self, e, k, g=None) -> np.ndarray:
        """-(g, n . beta phi_i) over the inflow part of boundary facet k."""
        g = self.spec.g if g is None else g
        xi, x, w = self.facet_quadrature(e, k)
        bf = np.asarray(self.spec.beta(x), dtype=float)
        nb = bf @ self.maps[e].normals[k]
        inflow = nb < -CHAR_TOL * np.linalg.norm(bf, axis=1)
        if not inflow.any():
            return np.zeros(self.n_basis)
        gv = np.asarray(g(x), dtype=float).reshape(-1)
        V = self.basis.eval(xi) if xi is not self.elements[e].facets[k].xi else self.elements[e].facets[k].V
        return -(V.T @ (w * nb * inflow * gv))

    def coupling_block(self, e, k) -> np.ndarray:
        """Matrix of the upwind neighbor contribution (test on e, trial on neighbor)."""
        fd = self.elements[e].facets[k]
        VN = self._neighbor_trace_basis(fd)
        return fd.V.T @ ((fd.w * fd.nbeta * fd.inflow)[:, None] * VN)


@dataclass(eq=False)
class DGSolution:
    mesh: Mesh
    p: int
    coeffs: np.ndarray = field(repr=False)  # (n_elements, dim P_p)
    disc: Discretization = field(repr=False)
    solver: str = ""
    residual: float = float("nan")
    iterations: int = 0
    residual_history: list = field(default_factory=list, repr=False)
    wall_time: float = 0.0

    def element_coeffs(self, e) -> ModalCoeffs:
        return ModalCoeffs(2, self.p, self.coeffs[e])

    def evaluate(self, e, xi) -> np.ndarray:
        return self.disc.basis.eval(xi) @ self.coeffs[e]


def assemble_local(disc: Discretization, e: int, upwind_traces: dict, f=None, g=None):
    """Local matrix and right-hand side of element e.

    ``upwind_traces[k]`` holds the upwind values at the facet quadrature
    points of reference facet k (neighbor trace, or g on Gamma_-); it is
    required for every facet with an inflow part.  For boundary facets the
    entry may be the string ``"g"`` to integrate g with the graded rule.
    """
    ed = disc.elements[e]
    rhs = disc.source_vector(e, f)
    for fd in ed.facets:
        if not fd.has_inflow:
            continue
        if fd.k not in upwind_traces:
            raise MissingTraceError(f"no upwind trace for facet {fd.facet_id} (local {fd.k}) of element {e}")
        tr = upwind_traces[fd.k]
        if isinstance(tr, str) and tr == "g":
            rhs += disc.boundary_vector(e, fd.k, g)
        else:
            tr = np.asarray(tr, dtype=float).reshape(-1)
            rhs -= fd.V.T @ (fd.w * fd.nbeta * fd.inflow * tr)
    return ed.vol_matrix.copy(), rhs


def _upwind_traces(disc, e, coeffs):
    traces = {}
    for fd in disc.elements[e].facets:
        if not fd.has_inflow:
            continue
        if fd.is_boundary:
            traces[fd.k] = "g"
        else:
            traces[fd.k] = disc._neighbor_trace_basis(fd) @ coeffs[fd.neighbor]
    return traces


def _local_solve(A, b, e):
    try:
        lu = sla.lu_factor(A, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"singular local matrix on element {e}") from exc
    if np.any(np.abs(np.diag(lu[0])) <= 1e-14 * np.abs(A).max()):
        raise SolverError(f"singular local matrix on element {e}")
    return sla.lu_solve(lu, b)


def solve_sweep(mesh: Mesh, p: int, spec: ProblemSpec, report=None, disc=None, verify=False,
                **disc_kw) -> DGSolution:
    """Element-by-element solve in upwind order (constant beta, admissible mesh)."""
    t0 = time.perf_counter()
    if not spec.beta_constant:
        raise ValueError("solve_sweep needs a constant convection field")
    if report is None:
        report = check_admissible(mesh, spec.beta_vector)
    if not report.verdict:
        raise ValueError("mesh is not admissible for this beta; use solve_global")
    disc = disc or Discretization(mesh, p, spec, **disc_kw)
    coeffs = np.zeros((mesh.n_elements, disc.n_basis))
    for e in report.upwind_order:
        A, b = assemble_local(disc, e, _upwind_traces(disc, e, coeffs))
        coeffs[e] = _local_solve(A, b, e)
    sol = DGSolution(mesh, p, coeffs, disc, solver="sweep", iterations=1)
    if verify:
        K, F = assemble_global(disc)
        sol.residual = _relative_residual(K, F, coeffs.ravel())
    sol.wall_time = time.perf_counter() - t0
    return sol


def assemble_global(disc: Discretization, f=None, g=None):
    """Block-sparse global matrix (rows: test functions) and load vector."""
    nb, ne = disc.n_basis, disc.mesh.n_elements
    rows, cols, vals = [], [], []
    F = np.zeros(ne * nb)
    ii, jj = np.meshgrid(np.arange(nb), np.arange(nb), indexing="ij")
    for e, ed in enumerate(disc.elements):
        F[e * nb:(e + 1) * nb] = disc.source_vector(e, f)
        rows.append((e * nb + ii).ravel())
        cols.append((e * nb + jj).ravel())
        vals.append(ed.vol_matrix.ravel())
        for fd in ed.facets:
            if not fd.has_inflow:
                continue
            if fd.is_boundary:
                F[e * nb:(e + 1) * nb] += disc.boundary_vector(e, fd.k, g)
            else:
                rows.append((e * nb + ii).ravel())
                cols.append((fd.neighbor * nb + jj).ravel())
                vals.append(disc.coupling_block(e, fd.k).ravel())
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ne * nb, ne * nb))
    return K, F


def _relative_residual(K, F, u):
    nf = np.linalg.norm(F)
    r = np.linalg.norm(F - K @ u)
    return float(r / nf) if nf > 0 else float(r)


def solve_global(mesh: Mesh, p: int, spec: ProblemSpec, disc=None, tol=1e-10, max_iter=500,
                 **disc_kw) -> DGSolution:
    """Global solve: block Gauss-Seidel in approximate upwind order with a
    direct sparse fallback."""
    t0 = time.perf_counter()
    disc = disc or Discretization(mesh, p, spec, **disc_kw)
    nb, ne = disc.n_basis, mesh.n_elements
    K, F = assemble_global(disc)
    u = np.zeros(ne * nb)
    history = []
    if np.linalg.norm(F) == 0.0:
        sol = DGSolution(mesh, p, u.reshape(ne, nb), disc, "global-gs", 0.0, 0, [0.0])
        sol.wall_time = time.perf_counter() - t0
        return sol

    # approximate upwind order: barycenters projected on the mean convection direction
    bc = mesh.barycenters()
    mean_beta = np.asarray(spec.beta(bc), dtype=float).mean(axis=0)
    order = np.argsort(bc @ mean_beta, kind="stable")
    lus = [sla.lu_factor(disc.elements[e].vol_matrix) for e in range(ne)]
    couplings = []
    for e in range(ne):
        blocks = []
        for fd in disc.elements[e].facets:
            if fd.has_inflow and not fd.is_boundary:
                blocks.append((fd.neighbor, disc.coupling_block(e, fd.k)))
        couplings.append(blocks)
    Fb = F.reshape(ne, nb)
    ub = u.reshape(ne, nb)
    solver = "global-gs"
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        for e in order:
            b = Fb[e].copy()
            for nbr, C in couplings[e]:
                b -= C @ ub[nbr]
            ub[e] = sla.lu_solve(lus[e], b)
        res = _relative_residual(K, F, u)
        history.append(res)
        if res < tol * 1e-2 or (res < tol and len(history) > 1 and history[-2] <= res * 1.5):
            break
    if not res < tol:
        log.info("block Gauss-Seidel stalled at %.3e after %d sweeps; direct solve", res, it)
        solver = "global-direct"
        u = spla.spsolve(K.tocsc(), F)
        res = _relative_residual(K, F, u)
        history.append(res)
        if not res < tol:
            raise SolverError(f"global solve did not reach residual {tol:g} (got {res:.3e})", history)
    sol = DGSolution(mesh, p, u.reshape(ne, nb).copy(), disc, solver, res, it, history)
    sol.wall_time = time.perf_counter() - t0
    return sol


def bilinear_form(disc: Discretization, u_coeffs, v_coeffs) -> float:
    """B(u, v) for discrete u, v given as (n_elements, n_basis) coefficient arrays."""
    K, _ = assemble_global(disc, f=lambda x: np.zeros(len(x)), g=lambda x: np.zeros(len(x)))
    return float(np.asarray(v_coeffs).ravel() @ (K @ np.asarray(u_coeffs).ravel()))


def _facet_values(disc, coeffs, e, fd):
    """Interior trace and neighbor trace of a discrete function on facet fd of e."""
    ut = fd.V @ coeffs[e]
    un = None if fd.is_boundary else disc._neighbor_trace_basis(fd) @ coeffs[fd.neighbor]
    return ut, un


def stability_functional(sol: DGSolution, spec: ProblemSpec | None = None):
    """(cbar0 ||u||^2, sum_T || |n.beta|^1/2 [u] ||^2 on inflow facets, || |n.beta|^1/2 u ||^2 on Gamma)."""
    disc = sol.disc
    spec = spec or disc.spec
    vol = jump = bnd = 0.0
    for e, ed in enumerate(disc.elements):
        vol += ed.amap.jacobian * float(sol.coeffs[e] @ sol.coeffs[e])
        for fd in ed.facets:
            ut, un = _facet_values(disc, sol.coeffs, e, fd)
            a = np.abs(fd.nbeta)
            if fd.is_boundary:
                bnd += float(np.sum(fd.w * a * ut ** 2))
            else:
                jump += float(np.sum(fd.w * a * fd.inflow * (ut - un) ** 2))
    return spec.cbar0 * vol, jump, bnd


def energy_identity_check(disc: Discretization, v_coeffs) -> float:
    """|B(v, v) - (||cbar^1/2 v||^2 + 1/2 sum jumps^2 + 1/2 boundary)| for discrete v."""
    spec = disc.spec
    v = np.asarray(v_coeffs, dtype=float).reshape(disc.mesh.n_elements, disc.n_basis)
    lhs = bilinear_form(disc, v, v)
    vol = jump = bnd = 0.0
    for e, ed in enumerate(disc.elements):
        vals = disc.V @ v[e]
        vol += float(np.sum(ed.W * spec.cbar(ed.x) * vals ** 2))
        for fd in ed.facets:
            ut, un = _facet_values(disc, v, e, fd)
            a = np.abs(fd.nbeta)
            if fd.is_boundary:
                bnd += float(np.sum(fd.w * a * ut ** 2))
            else:
                jump += float(np.sum(fd.w * a * fd.inflow * (ut - un) ** 2))
    return abs(lhs - (vol + 0.5 * jump + 0.5 * bnd))


def solve(mesh: Mesh, p: int, spec: ProblemSpec, solver: str = "auto", **disc_kw) -> DGSolution:
    """Dispatch to the sweep when it applies, otherwise to the global solver."""
    if solver not in ("auto", "sweep", "global"):
        raise ValueError(f"unknown solver {solver!r}")
    if solver in ("auto", "sweep") and spec.beta_constant:
        report = check_admissible(mesh, spec.beta_vector)
        if report.verdict:
            sol = solve_sweep(mesh, p, spec, report=report, verify=True, **disc_kw)
            return sol
    if solver == "sweep":
        raise ValueError("mesh is not admissible for sweep; use solver='auto' or 'global'")
    return solve_global(mesh, p, spec, **disc_kw)
