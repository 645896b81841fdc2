"""Element projections onto P_p in the orthonormal modal basis.

All coefficients refer to the reference basis pulled back through the
element map, so the L2 norm on the *reference* element of the represented
polynomial is the Euclidean norm of the coefficient vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import AffineMap, reference_map
from .orthopoly import REFERENCE_VERTICES, build_basis, dim_poly
from .quadrature import QuadRule, interval_rule, simplex_rule


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ModalCoeffs:
    dim: int
    degree: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.values) != dim_poly(self.dim, self.degree):
            raise ValueError("coefficient count does not match dim P_p")

    @property
    def basis(self):
        return build_basis(self.dim, self.degree)

    def __call__(self, xi) -> np.ndarray:
        """Evaluate at reference points."""
        return self.basis.eval(xi) @ self.values

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def padded(self, degree: int) -> "ModalCoeffs":
        out = np.zeros(dim_poly(self.dim, degree))
        n = min(len(out), len(self.values))
        out[:n] = self.values[:n]
        return ModalCoeffs(self.dim, degree, out)


def _pullback(f, amap, pts):
    amap = amap if amap is not None else reference_map(pts.shape[1])
    return np.asarray(f(amap.forward(pts)), dtype=float).reshape(len(pts))


def l2_project(f, amap: AffineMap | None, p: int, rule: QuadRule) -> ModalCoeffs:
    """Orthogonal projection: coefficient k is (f o F, phi_k) on the reference element."""
    dim = rule.dim
    basis = build_basis(dim, p)
    fv = _pullback(f, amap, rule.points)
    vals = basis.eval(rule.points).T @ (rule.weights * fv)
    return ModalCoeffs(dim, p, vals)


def h1_project(f, grad_f, amap: AffineMap | None, p: int, rule: QuadRule) -> ModalCoeffs:
    """(grad(f - q), grad w) = 0 for all w in P_p and (f - q, 1) = 0."""
    dim = rule.dim
    amap = amap if amap is not None else reference_map(dim)
    basis = build_basis(dim, p)
    x = amap.forward(rule.points)
    V = basis.eval(rule.points)
    out = np.zeros(len(basis))
    out[0] = V[:, 0] @ (rule.weights * np.asarray(f(x), dtype=float).reshape(-1))
    if p == 0:
        return ModalCoeffs(dim, p, out)
    Ainv_t = np.linalg.inv(amap.A).T
    G = basis.grad(rule.points) @ Ainv_t.T  # physical gradients (npts, nb, dim)
    gf = np.asarray(grad_f(x), dtype=float).reshape(len(x), dim)
    K = np.einsum("q,qid,qjd->ij", rule.weights, G[:, 1:], G[:, 1:])
    rhs = np.einsum("q,qid,qd->i", rule.weights, G[:, 1:], gf)
    try:
        out[1:] = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise ProjectionError("singular H1 stiffness system") from exc
    return ModalCoeffs(dim, p, out)


def outflow_facet_rule(dim: int, degree: int) -> QuadRule:
    """Quadrature on the reference outflow facet in facet coordinates.

    The outflow facet is the reference simplex of dimension dim - 1 placed at
    last coordinate -1; in 1D it is the point -1.
    """
    if dim == 1:
        return QuadRule(0, np.zeros((1, 0)), np.ones(1), 10 ** 9)
    if dim == 2:
        return interval_rule(degree)
    return simplex_rule(dim - 1, degree)


def embed_outflow(points: np.ndarray, dim: int) -> np.ndarray:
    """Lift outflow-facet coordinates into the reference element."""
    return np.hstack([points.reshape(len(points), dim - 1), -np.ones((len(points), 1))])


def cdg_project(f, amap: AffineMap | None, p: int, rule: QuadRule,
                facet_rule: QuadRule | None = None) -> ModalCoeffs:
    """CDG projection by direct moment matching.

    Interior moments against P_{p-1} are taken from the L2 projection; the
    degree-p block solves the outflow-facet moment system against P_p(F+).
    ``amap`` must place the element's outflow facet on the reference one.
    """
    dim = rule.dim
    basis = build_basis(dim, p)
    if facet_rule is None:
        facet_rule = outflow_facet_rule(dim, 2 * p + 4)
    lower = dim_poly(dim, p - 1)
    vals = np.zeros(len(basis))
    if lower:
        fv = _pullback(f, amap, rule.points)
        vals[:lower] = basis.eval(rule.points)[:, :lower].T @ (rule.weights * fv)

    fpts = embed_outflow(facet_rule.points, dim)
    if dim == 1:
        test = np.ones((1, 1))
    else:
        test = build_basis(dim - 1, p).eval(facet_rule.points)
    trace = basis.eval(fpts)
    fvals = _pullback(f, amap, fpts)
    wt = facet_rule.weights[:, None] * test
    M = wt.T @ trace[:, lower:]
    rhs = wt.T @ (fvals - trace[:, :lower] @ vals[:lower])
    if M.shape[0] != M.shape[1]:
        raise ProjectionError("outflow facet block is not square")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise ProjectionError(f"singular outflow facet block (cond={cond:.3g}); check element alignment")
    vals[lower:] = np.linalg.solve(M, rhs)
    return ModalCoeffs(dim, p, vals)


def cdg_from_modal(coeffs: ModalCoeffs, p: int) -> ModalCoeffs:
    """CDG projection of a finite modal expansion via alternating tail sums.

    The top-degree coefficient attached to facet index t is
    ``sum_k (-1)**(k - k0) v_(t, k)`` over k >= k0 = p - |t| in the
    un-normalized Koornwinder convention.
    """
    dim, pin = coeffs.dim, coeffs.degree
    if pin <= p:
        return coeffs.padded(p)
    src = build_basis(dim, pin)
    dst = build_basis(dim, p)
    position = {ix.indices: i for i, ix in enumerate(src.indices)}
    unnorm = coeffs.values * src.normalization
    out = np.zeros(len(dst))
    lower = dim_poly(dim, p - 1)
    out[:lower] = coeffs.values[:lower]
    for i in range(lower, len(dst)):
        t = dst.indices[i].indices
        head, k0 = t[:-1], t[-1]
        tail = 0.0
        for k in range(k0, k0 + pin - p + 1):
            tail += (-1) ** (k - k0) * unnorm[position[head + (k,)]]
        out[i] = tail / dst.normalization[i]
    return ModalCoeffs(dim, p, out)


def reference_facet_points(dim: int, k: int, rule1d: QuadRule):
    """Map a rule on [-1, 1] onto facet k (opposite vertex k) of the reference triangle.

    Returns reference points and weights scaled to the facet length.
    """
    if dim != 2:
        raise NotImplementedError("facet parametrization is provided for triangles")
    R = REFERENCE_VERTICES[2]
    a, b = np.delete(R, k, axis=0)
    s = rule1d.points[:, 0]
    pts = (1 - s)[:, None] / 2 * a + (1 + s)[:, None] / 2 * b
    return pts, rule1d.weights * np.linalg.norm(b - a) / 2
