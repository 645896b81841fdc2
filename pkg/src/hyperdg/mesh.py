"""Simplicial meshes: ASCII I/O, structured generation, facet classification
with respect to a convection field, admissibility checks and upwind ordering.

Mesh file format (line oriented, ``#`` starts a comment line)::

    simplexmesh <dim>
    <n_vertices> <n_elements>
    <dim reals per vertex line>
    <dim+1 zero-based vertex ids per element line>
"""

from __future__ import annotations

import graphlib
import io
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .orthopoly import REFERENCE_VERTICES
from .quadrature import interval_rule, simplex_rule

OUTFLOW = "outflow"
INFLOW = "inflow"
CHARACTERISTIC = "characteristic"
MIXED = "mixed"

# |n.beta| <= CHAR_TOL * |beta| counts as characteristic
CHAR_TOL = 1e-12


class MeshParseError(ValueError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class MeshTopologyError(ValueError):
    pass


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    vertices: np.ndarray = field(repr=False)
    elements: np.ndarray = field(repr=False)
    facets: np.ndarray = field(repr=False)
    facet_elements: np.ndarray = field(repr=False)
    element_facets: np.ndarray = field(repr=False)
    h: float = 0.0
    sigma: float = 0.0

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    def is_boundary_facet(self, facet_id: int) -> bool:
        return self.facet_elements[facet_id, 1] < 0

    def neighbor(self, element: int, facet_id: int) -> int:
        a, b = self.facet_elements[facet_id]
        return int(b if a == element else a)

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)


def _signed_measure(pts):
    d = pts.shape[1]
    m = (pts[1:] - pts[0]).T
    return np.linalg.det(m) / math.factorial(d)


def _facet_measure(pts):
    # pts: (k+1, dim) vertices of a k-simplex
    k = len(pts) - 1
    if k == 0:
        return 1.0
    e = pts[1:] - pts[0]
    return math.sqrt(max(np.linalg.det(e @ e.T), 0.0)) / math.factorial(k)


def build_mesh(vertices, elements) -> Mesh:
    """Validate a simplex soup and build its facet topology."""
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim == 1:
        vertices = vertices.reshape(-1, 1)
    dim = vertices.shape[1]
    elements = np.array(elements, dtype=np.int64).reshape(-1, dim + 1)
    nv = len(vertices)
    scale = max(np.ptp(vertices, axis=0).max() if nv else 1.0, 1e-300)
    for e, conn in enumerate(elements):
        if conn.min() < 0 or conn.max() >= nv:
            raise MeshTopologyError(f"element {e} references a vertex outside 0..{nv - 1}")
        if len(set(conn.tolist())) != dim + 1:
            raise MeshTopologyError(f"element {e} repeats a vertex id: {conn.tolist()}")
        vol = _signed_measure(vertices[conn])
        if abs(vol) <= 1e-14 * scale ** dim:
            raise MeshTopologyError(f"element {e} is degenerate (zero measure)")
        if vol < 0:
            conn[[0, 1]] = conn[[1, 0]]

    facet_index: dict[tuple, int] = {}
    facets, owners = [], []
    element_facets = np.empty((len(elements), dim + 1), dtype=np.int64)
    for e, conn in enumerate(elements):
        for k in range(dim + 1):
            key = tuple(sorted(int(v) for i, v in enumerate(conn) if i != k))
            fid = facet_index.get(key)
            if fid is None:
                fid = len(facets)
                facet_index[key] = fid
                facets.append(key)
                owners.append([e, -1])
            elif owners[fid][1] < 0:
                owners[fid][1] = e
            else:
                raise MeshTopologyError(f"facet {list(key)} is shared by more than two elements")
            element_facets[e, k] = fid
    facets_arr = np.array(facets, dtype=np.int64).reshape(-1, dim)
    owners_arr = np.array(owners, dtype=np.int64).reshape(-1, 2)
    _check_conforming(vertices, facets_arr, owners_arr)

    h, sigma = 0.0, 0.0
    for conn in elements:
        pts = vertices[conn]
        diam = max(np.linalg.norm(a - b) for a, b in combinations(pts, 2))
        surface = sum(_facet_measure(np.delete(pts, k, axis=0)) for k in range(dim + 1))
        inradius = dim * abs(_signed_measure(pts)) / surface
        h = max(h, diam)
        sigma = max(sigma, diam / inradius)
    for arr in (vertices, elements, facets_arr, owners_arr, element_facets):
        arr.setflags(write=False)
    return Mesh(dim, vertices, elements, facets_arr, owners_arr, element_facets, float(h), float(sigma))


def _check_conforming(vertices, facets, owners):
    """Reject vertices lying inside a boundary facet (hanging nodes)."""
    dim = vertices.shape[1]
    if dim == 1:
        return
    tol = 1e-10 * max(np.ptp(vertices, axis=0).max(), 1.0)
    for fid in np.nonzero(owners[:, 1] < 0)[0]:
        ids = facets[fid]
        pts = vertices[ids]
        base = pts[0]
        E = (pts[1:] - base).T
        rel = vertices - base
        coef, *_ = np.linalg.lstsq(E, rel.T, rcond=None)
        resid = np.linalg.norm(E @ coef - rel.T, axis=0)
        bary = np.vstack([1 - coef.sum(axis=0), coef])
        inside = (resid <= tol) & np.all(bary >= -1e-10, axis=0)
        inside[ids] = False
        if inside.any():
            raise MeshTopologyError(
                f"non-conforming mesh: vertex {int(np.nonzero(inside)[0][0])} "
                f"lies on facet {ids.tolist()}")


def load_mesh(stream) -> Mesh:
    if isinstance(stream, (str, bytes)):
        stream = io.StringIO(stream if isinstance(stream, str) else stream.decode())
    lines = []
    for lineno, raw in enumerate(stream, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        lines.append((lineno, text.split()))
    if not lines:
        raise MeshParseError(0, "empty mesh file")
    lineno, head = lines[0]
    if len(head) != 2 or head[0] != "simplexmesh":
        raise MeshParseError(lineno, "expected 'simplexmesh <dim>'")
    try:
        dim = int(head[1])
    except ValueError:
        raise MeshParseError(lineno, f"bad dimension {head[1]!r}") from None
    if dim not in (1, 2, 3):
        raise MeshParseError(lineno, f"unsupported dimension {dim}")
    if len(lines) < 2:
        raise MeshParseError(lineno, "missing counts line")
    lineno, counts = lines[1]
    try:
        nv, ne = (int(t) for t in counts)
    except ValueError:
        raise MeshParseError(lineno, "expected '<n_vertices> <n_elements>'") from None
    body = lines[2:]
    if len(body) < nv + ne:
        last = body[-1][0] if body else lineno
        raise MeshParseError(last, f"expected {nv} vertex and {ne} element lines, got {len(body)}")
    if len(body) > nv + ne:
        raise MeshParseError(body[nv + ne][0], "unexpected trailing data")
    verts = np.empty((nv, dim))
    for i, (ln, tok) in enumerate(body[:nv]):
        if len(tok) != dim:
            raise MeshParseError(ln, f"vertex line needs {dim} coordinates")
        try:
            verts[i] = [float(t) for t in tok]
        except ValueError:
            raise MeshParseError(ln, "bad coordinate") from None
    elems = np.empty((ne, dim + 1), dtype=np.int64)
    for i, (ln, tok) in enumerate(body[nv:]):
        if len(tok) != dim + 1:
            raise MeshParseError(ln, f"element line needs {dim + 1} vertex ids")
        try:
            elems[i] = [int(t) for t in tok]
        except ValueError:
            raise MeshParseError(ln, "bad vertex id") from None
    return build_mesh(verts, elems)


def save_mesh(mesh: Mesh, stream) -> None:
    stream.write(f"simplexmesh {mesh.dim}\n")
    stream.write(f"{len(mesh.vertices)} {mesh.n_elements}\n")
    for v in mesh.vertices:
        stream.write(" ".join(repr(float(c)) for c in v) + "\n")
    for conn in mesh.elements:
        stream.write(" ".join(str(int(i)) for i in conn) + "\n")


def gen_structured(nx: int, ny: int, diagonal: str = "against_flow") -> Mesh:
    """nx x ny squares on (-1, 1)^2, each cut into two triangles.

    ``against_flow`` cuts along the (1, 1) direction, so for beta = (1, 1)
    every triangle has one inflow, one outflow and one characteristic facet.
    ``with_flow`` cuts along (1, -1); the upper triangles then have two
    outflow facets for beta = (1, 1).  The line x = 0 lies on mesh edges iff
    nx is even.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be positive")
    if diagonal not in ("against_flow", "with_flow"):
        raise ValueError(f"unknown diagonal {diagonal!r}")
    xs = np.linspace(-1.0, 1.0, nx + 1)
    ys = np.linspace(-1.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    elems = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if diagonal == "against_flow":
                elems += [(a, b, c), (a, c, d)]
            else:
                elems += [(a, b, d), (b, c, d)]
    return build_mesh(verts, elems)


# {{{ geometry helpers

def barycentric_gradients(pts: np.ndarray) -> np.ndarray:
    """Gradients of the barycentric coordinates of a simplex, shape (dim+1, dim)."""
    E = (pts[1:] - pts[0]).T
    G = np.linalg.inv(E)  # rows: gradients of lambda_1..lambda_dim
    return np.vstack([-G.sum(axis=0), G])


def element_normals(mesh: Mesh, e: int) -> np.ndarray:
    """Unit outward normals of the facets opposite each local vertex."""
    g = barycentric_gradients(mesh.vertices[mesh.elements[e]])
    return -g / np.linalg.norm(g, axis=1)[:, None]


def _reference_facet_rule(dim, degree):
    """Points on the reference facet simplex (dim-1) and weights summing to 1."""
    if dim == 1:
        return np.zeros((1, 0)), np.ones(1)
    if dim == 2:
        r = interval_rule(degree)
        return (r.points[:, 0] + 1) / 2, r.weights / 2
    r = simplex_rule(2, degree)
    return r.points, r.weights / 2.0


def facet_points(pts: np.ndarray, degree: int):
    """Quadrature on the simplex with vertices ``pts`` (k+1 points).

    Returns physical points and weights summing to the facet measure.
    """
    k = len(pts) - 1
    meas = _facet_measure(pts)
    if k == 0:
        return pts.copy(), np.ones(1)
    if k == 1:
        s, w = _reference_facet_rule(2, degree)
        return (1 - s)[:, None] * pts[0] + s[:, None] * pts[1], w * meas
    ref, w = _reference_facet_rule(3, degree)
    # reference triangle vertices -> barycentric weights
    R = REFERENCE_VERTICES[2]
    lam12 = np.linalg.solve((R[1:] - R[0]).T, (ref - R[0]).T).T
    lam = np.hstack([1 - lam12.sum(axis=1, keepdims=True), lam12])
    return lam @ pts, w * meas

# }}}


def _beta_values(beta, x):
    if callable(beta):
        return np.asarray(beta(x), dtype=float).reshape(len(x), -1)
    b = np.asarray(beta, dtype=float)
    return np.broadcast_to(b, (len(x), len(b)))


def is_constant_field(beta) -> bool:
    return not callable(beta) or bool(getattr(beta, "constant", False))


@dataclass(frozen=True, eq=False)
class FacetClassification:
    classes: tuple  # per element, per local facet
    normals: np.ndarray = field(repr=False)  # (ne, dim+1, dim)
    flux_sign_values: tuple = field(repr=False)  # per element, per local facet: n.beta at facet points

    def outflow_facets(self, e: int) -> list[int]:
        return [k for k, c in enumerate(self.classes[e]) if c == OUTFLOW]


def classify_facets(mesh: Mesh, beta, degree: int = 6) -> FacetClassification:
    classes, fluxes = [], []
    normals = np.empty((mesh.n_elements, mesh.dim + 1, mesh.dim))
    for e in range(mesh.n_elements):
        nrm = element_normals(mesh, e)
        normals[e] = nrm
        pts = mesh.vertices[mesh.elements[e]]
        row_c, row_f = [], []
        for k in range(mesh.dim + 1):
            fpts = np.delete(pts, k, axis=0)
            if is_constant_field(beta) and not callable(beta):
                b = np.asarray(beta, dtype=float)
                vals = np.array([nrm[k] @ b])
                bn = np.linalg.norm(b)
            else:
                x, _ = facet_points(fpts, degree)
                bv = _beta_values(beta, x)
                vals = bv @ nrm[k]
                bn = np.linalg.norm(bv, axis=1).max()
            tol = CHAR_TOL * max(bn, 1e-300)
            if np.all(vals > tol):
                c = OUTFLOW
            elif np.all(vals < -tol):
                c = INFLOW
            elif np.all(np.abs(vals) <= tol):
                c = CHARACTERISTIC
            else:
                c = MIXED
            row_c.append(c)
            row_f.append(vals)
        classes.append(tuple(row_c))
        fluxes.append(tuple(row_f))
    normals.setflags(write=False)
    return FacetClassification(tuple(classes), normals, tuple(fluxes))


@dataclass(frozen=True, eq=False)
class AdmissibilityReport:
    applicable: bool
    outflow_facet_count: np.ndarray = field(repr=False)
    a1_ok: np.ndarray = field(repr=False)
    a2_ok: dict = field(repr=False)  # (element, local facet) -> bool for interior inflow facets
    verdict: bool = False
    upwind_order: tuple | None = None
    cycle: tuple | None = None


def check_admissible(mesh: Mesh, beta) -> AdmissibilityReport:
    """Check (A1), (A2) and compute an upwind element order for constant beta."""
    ne = mesh.n_elements
    if callable(beta) and not getattr(beta, "constant", False):
        return AdmissibilityReport(False, np.zeros(ne, int), np.zeros(ne, bool), {}, False)
    if callable(beta):
        beta = np.asarray(beta(mesh.vertices[:1]), dtype=float).reshape(-1)
    cls = classify_facets(mesh, beta)
    counts = np.array([sum(c == OUTFLOW for c in row) for row in cls.classes])
    a1 = counts == 1
    a2 = {}
    preds: dict[int, set] = {e: set() for e in range(ne)}
    for e in range(ne):
        for k, c in enumerate(cls.classes[e]):
            fid = mesh.element_facets[e, k]
            if c != INFLOW or mesh.is_boundary_facet(fid):
                continue
            nb = mesh.neighbor(e, fid)
            knb = int(np.nonzero(mesh.element_facets[nb] == fid)[0][0])
            a2[(e, k)] = cls.classes[nb][knb] == OUTFLOW
            preds[e].add(nb)
    order, cycle = None, None
    try:
        order = tuple(graphlib.TopologicalSorter(preds).static_order())
    except graphlib.CycleError as exc:
        cycle = tuple(exc.args[1])
    verdict = bool(a1.all() and all(a2.values()) and order is not None)
    a1.setflags(write=False)
    return AdmissibilityReport(True, counts, a1, a2, verdict, order, cycle)


@dataclass(frozen=True, eq=False)
class AffineMap:
    """Affine map x = A xi + b from the reference simplex onto an element.

    ``perm[r]`` is the local (mesh-order) vertex that reference vertex r maps
    to; reference facet k (opposite reference vertex k) is therefore the
    element's local facet ``perm[k]`` and global facet ``facet_ids[k]``.
    """

    element: int
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    det: float = 1.0
    perm: tuple = ()
    vertices: np.ndarray = field(default=None, repr=False)
    facet_ids: tuple = ()
    facet_measures: np.ndarray = field(default=None, repr=False)
    normals: np.ndarray = field(default=None, repr=False)  # physical outward normals per reference facet

    @property
    def dim(self) -> int:
        return len(self.b)

    @property
    def jacobian(self) -> float:
        return abs(self.det)

    def forward(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return xi @ self.A.T + self.b

    def inverse(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.linalg.solve(self.A, (x - self.b).T).T

    def facet_scale(self, k: int) -> float:
        """Physical over reference measure of reference facet k."""
        ref = _facet_measure(np.delete(REFERENCE_VERTICES[self.dim], k, axis=0))
        return float(self.facet_measures[k] / ref)


def reference_map(dim: int) -> AffineMap:
    """Identity map onto the reference simplex itself."""
    R = REFERENCE_VERTICES[dim]
    g = barycentric_gradients(R)
    nrm = -g / np.linalg.norm(g, axis=1)[:, None]
    meas = np.array([_facet_measure(np.delete(R, k, axis=0)) for k in range(dim + 1)])
    return AffineMap(-1, np.eye(dim), np.zeros(dim), 1.0, tuple(range(dim + 1)), R.copy(),
                     tuple(range(dim + 1)), meas, nrm)


def affine_map(mesh: Mesh, e: int, beta=None) -> AffineMap:
    """Affine map onto element e; with a constant ``beta`` the unique outflow
    facet of e is placed on the reference outflow facet."""
    dim = mesh.dim
    conn = mesh.elements[e]
    local = list(range(dim + 1))
    if beta is not None:
        b = np.asarray(beta, dtype=float)
        nrm = element_normals(mesh, e)
        flux = nrm @ b
        out = [k for k in local if flux[k] > CHAR_TOL * np.linalg.norm(b)]
        if len(out) != 1:
            raise AdmissibilityError(
                f"element {e} has {len(out)} outflow facets; (A1) requires exactly one")
        apex = out[0]
        perm = tuple([k for k in local if k != apex] + [apex])
    else:
        perm = tuple(local)
    P = mesh.vertices[conn[list(perm)]]
    R = REFERENCE_VERTICES[dim]
    A = (P[1:] - P[0]).T @ np.linalg.inv((R[1:] - R[0]).T)
    bvec = P[0] - A @ R[0]
    g = barycentric_gradients(P)
    normals = -g / np.linalg.norm(g, axis=1)[:, None]
    fids = tuple(int(mesh.element_facets[e, perm[k]]) for k in range(dim + 1))
    meas = np.array([_facet_measure(np.delete(P, k, axis=0)) for k in range(dim + 1)])
    return AffineMap(e, A, bvec, float(np.linalg.det(A)), perm, P, fids, meas, normals)
