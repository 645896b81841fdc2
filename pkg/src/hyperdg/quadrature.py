"""Gauss-Legendre rules, collapsed tensor rules on simplices, and graded
composite rules for integrands with a kink or singularity along a line."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .orthopoly import REFERENCE_VERTICES, duffy_jacobian, duffy_map


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadRule:
    dim: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    exactness_degree: int
    n_per_dir: int = 0

    def __len__(self):
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre_nodes(n: int):
    if n in _GL_CACHE:
        return _GL_CACHE[n]
    if not 1 <= n <= 200:
        raise ValueError("gauss_legendre supports 1 <= n <= 200")
    m = (n + 1) // 2
    nodes = np.empty(n)
    weights = np.empty(n)
    for i in range(m):
        x = math.cos(math.pi * (i + 0.75) / (n + 0.5))
        for _ in range(100):
            p0, p1 = 1.0, x
            for k in range(2, n + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            if n == 1:
                p0, p1 = 1.0, x
            dp = n * (x * p1 - p0) / (x * x - 1.0)
            dx = p1 / dp
            x -= dx
            if abs(dx) <= 1e-15:
                break
        else:
            raise QuadratureError(f"Newton iteration for a root of L_{n} did not converge")
        # recompute the derivative at the converged node for the weight
        p0, p1 = 1.0, x
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1.0) if n > 1 else 1.0
        w = 2.0 / ((1.0 - x * x) * dp * dp)
        nodes[i], nodes[n - 1 - i] = -x, x
        weights[i] = weights[n - 1 - i] = w
    if n % 2 == 1:
        nodes[m - 1] = 0.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    _GL_CACHE[n] = (nodes, weights)
    return nodes, weights


def gauss_legendre(n: int) -> QuadRule:
    """n-point Gauss-Legendre rule on [-1, 1], exact to degree 2n - 1."""
    x, w = _gauss_legendre_nodes(n)
    return QuadRule(1, x.reshape(-1, 1), w.copy(), 2 * n - 1, n)


def points_for_degree(dim: int, degree: int) -> int:
    # one extra point per direction absorbs the collapsed Jacobian factors
    return math.ceil((degree + dim) / 2) + 1


def simplex_rule(dim: int, degree: int) -> QuadRule:
    """Collapsed tensor Gauss rule on the reference simplex."""
    if degree < 0:
        raise ValueError("exactness degree must be nonnegative")
    n = points_for_degree(dim, degree)
    x, w = _gauss_legendre_nodes(n)
    if dim == 1:
        return QuadRule(1, x.reshape(-1, 1).copy(), w.copy(), 2 * n - 1, n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    wz = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return QuadRule(dim, duffy_map(dim, z), wz * duffy_jacobian(dim, z), degree, n)


def interval_rule(degree: int) -> QuadRule:
    """Gauss rule on [-1, 1] with exactness at least ``degree``."""
    return gauss_legendre(max(1, math.ceil((degree + 1) / 2)))


def graded_interval_rule(n: int, breakpoint: float | None, levels: int) -> QuadRule:
    """Composite Gauss rule on [-1, 1] graded geometrically toward ``breakpoint``.

    Each side of the breakpoint is cut into ``levels + 1`` pieces whose
    lengths halve toward it.  Without a breakpoint in [-1, 1] a plain n-point
    rule is returned.
    """
    x, w = _gauss_legendre_nodes(n)
    if breakpoint is None or levels <= 0 or not -1.0 <= breakpoint <= 1.0:
        return QuadRule(1, x.reshape(-1, 1).copy(), w.copy(), 2 * n - 1, n)
    pts, wts = [], []
    for a, b in ((-1.0, breakpoint), (1.0, breakpoint)):
        length = abs(b - a)
        if length <= 1e-14:
            continue
        for lo, hi in _graded_pieces(levels, toward_one=True):
            # t in [0, 1] maps to a + t (b - a); t -> 1 approaches the breakpoint
            t0, t1 = lo, hi
            tm, th = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
            tt = tm + th * x
            pts.append(a + tt * (b - a))
            wts.append(w * th * length)
    p = np.concatenate(pts)
    order = np.argsort(p)
    return QuadRule(1, p[order].reshape(-1, 1), np.concatenate(wts)[order], 2 * n - 1, n)


def _graded_pieces(levels: int, toward_one: bool):
    """Subintervals of [0, 1] whose lengths halve toward 1 (or toward 0)."""
    cuts = [0.0] + [1.0 - 0.5 ** k for k in range(1, levels + 1)] + [1.0]
    pieces = list(zip(cuts[:-1], cuts[1:]))
    if toward_one:
        return pieces
    return [(1.0 - b, 1.0 - a) for a, b in pieces]


def _triangle_rule(p0, p1, p2, n, grade=None, levels=0):
    """Collapsed rule on the triangle (p0, p1, p2), collapse vertex p0.

    ``grade`` is "edge" (refine toward edge p1p2), "vertex" (toward p0) or None.
    """
    x, w = _gauss_legendre_nodes(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    area2 = abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
    if grade is None or levels <= 0:
        pieces = [(0.0, 1.0)]
    else:
        pieces = _graded_pieces(levels, toward_one=(grade == "edge"))
    pts, wts = [], []
    for t0, t1 in pieces:
        t = t0 + (t1 - t0) * s
        wt = (t1 - t0) * ws
        T, S = np.meshgrid(t, s, indexing="ij")
        WT, WS = np.meshgrid(wt, ws, indexing="ij")
        T, S = T.ravel(), S.ravel()
        edge_pt = (1 - S)[:, None] * p1[None, :] + S[:, None] * p2[None, :]
        pts.append(p0[None, :] + T[:, None] * (edge_pt - p0[None, :]))
        wts.append((WT * WS).ravel() * T * area2)
    return np.concatenate(pts), np.concatenate(wts)


def _clip(poly, sd, keep_positive):
    """Clip a convex polygon by the half plane sd >= 0 (or <= 0)."""
    sign = 1.0 if keep_positive else -1.0
    out, on = [], []
    m = len(poly)
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        da, db = sign * sd[i], sign * sd[(i + 1) % m]
        if da >= 0:
            out.append(a)
            on.append(da == 0)
        if (da > 0 and db < 0) or (da < 0 and db > 0):
            t = da / (da - db)
            out.append(a + t * (b - a))
            on.append(True)
    return out, on


def composite_refine(rule: QuadRule, axis_value: float, levels: int, amap=None) -> QuadRule:
    """Grade a triangle rule toward the line where the physical x equals ``axis_value``.

    ``amap`` is the affine element map (attributes ``A`` and ``b``); without it
    the reference coordinates are the physical ones.  The reference triangle
    is split along the line and every piece touching it is refined
    geometrically, ``levels`` times, toward the line.
    """
    if levels <= 0 or rule.dim != 2:
        return rule
    A = np.eye(2) if amap is None else np.asarray(amap.A)
    b = np.zeros(2) if amap is None else np.asarray(amap.b)
    normal = A[0]
    offset = axis_value - b[0]
    verts = REFERENCE_VERTICES[2]
    scale = np.linalg.norm(normal) * 2.0 + abs(offset)
    sd = verts @ normal - offset
    sd = np.where(np.abs(sd) <= 1e-12 * max(scale, 1.0), 0.0, sd)
    if np.all(sd > 0) or np.all(sd < 0):
        return rule
    n = rule.n_per_dir or max(2, math.ceil((rule.exactness_degree + 2) / 2) + 1)
    pts, wts = [], []
    poly = [v for v in verts]
    for keep in (True, False):
        piece, on = _clip(poly, sd, keep)
        if len(piece) < 3:
            continue
        start = on.index(True) if any(on) else 0
        m = len(piece)
        for i in range(1, m - 1):
            ids = [(start + k) % m for k in (0, i, i + 1)]
            tri = [np.asarray(piece[k], dtype=float) for k in ids]
            flags = [on[k] for k in ids]
            area2 = abs((tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
                        - (tri[1][1] - tri[0][1]) * (tri[2][0] - tri[0][0]))
            if area2 <= 1e-15:
                continue
            if flags[1] and flags[2]:
                p_, w_ = _triangle_rule(tri[0], tri[1], tri[2], n, "edge", levels)
            elif flags[0] and flags[1]:
                p_, w_ = _triangle_rule(tri[2], tri[0], tri[1], n, "edge", levels)
            elif flags[0] and flags[2]:
                p_, w_ = _triangle_rule(tri[1], tri[2], tri[0], n, "edge", levels)
            elif any(flags):
                k = flags.index(True)
                p_, w_ = _triangle_rule(tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3], n, "vertex", levels)
            else:
                p_, w_ = _triangle_rule(tri[0], tri[1], tri[2], n)
            pts.append(p_)
            wts.append(w_)
    return QuadRule(2, np.concatenate(pts), np.concatenate(wts), rule.exactness_degree, n)
