"""Legendre, Jacobi and Koornwinder polynomials on reference simplices.

Reference elements
------------------
* 1D: the interval [-1, 1]; the outflow point is -1.
* 2D: the triangle (-1,-1), (1,-1), (0,1); the outflow facet is y = -1.
* 3D: the tetrahedron (-1,-1,-1), (1,-1,-1), (0,1,-1), (0,0,1); the outflow
  facet is z = -1.

In every dimension the last reference vertex is the "apex" and the outflow
facet is the facet opposite to it.  The Koornwinder functions are tensor
products of Jacobi polynomials in the collapsed (Duffy) coordinates; their
trace on the outflow facet is, up to the sign ``(-1)**last_index``, the
Koornwinder function of one dimension lower.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

REFERENCE_VERTICES = {
    1: np.array([[-1.0], [1.0]]),
    2: np.array([[-1.0, -1.0], [1.0, -1.0], [0.0, 1.0]]),
    3: np.array([[-1.0, -1.0, -1.0], [1.0, -1.0, -1.0], [0.0, 1.0, -1.0], [0.0, 0.0, 1.0]]),
}
REFERENCE_MEASURE = {1: 2.0, 2: 2.0, 3: 4.0 / 3.0}

# collapse guard: points closer than this to the collapsed face/vertex use the
# limiting value of the collapsed coordinate
_COLLAPSE_EPS = 1e-14


@dataclass(frozen=True)
class PolyIndex:
    indices: tuple

    @property
    def dim(self) -> int:
        return len(self.indices)

    @property
    def total_degree(self) -> int:
        return sum(self.indices)


@dataclass(frozen=True)
class ReferenceSimplex:
    dim: int
    vertices: np.ndarray = field(repr=False)
    outflow_facet_id: int

    @property
    def measure(self) -> float:
        return REFERENCE_MEASURE[self.dim]


def reference_simplex(dim: int) -> ReferenceSimplex:
    # facet k is opposite vertex k, so the outflow facet has the apex id
    return ReferenceSimplex(dim, REFERENCE_VERTICES[dim].copy(), dim)


def dim_poly(dim: int, p: int) -> int:
    """Dimension of the space of polynomials of total degree <= p."""
    if p < 0:
        return 0
    return math.comb(p + dim, dim)


def graded_indices(dim: int, p: int) -> list[PolyIndex]:
    """Multi-indices of total degree <= p, graded then lexicographic."""
    out = []
    for d in range(p + 1):
        out.extend(PolyIndex(t) for t in _tuples_of_degree(dim, d))
    return out


def _tuples_of_degree(dim, d):
    if dim == 1:
        return [(d,)]
    res = []
    for first in range(d + 1):
        res.extend((first,) + rest for rest in _tuples_of_degree(dim - 1, d - first))
    return res


# {{{ one-dimensional families

def jacobi_table(alpha: float, beta: float, n: int, x) -> np.ndarray:
    """Values of P_0..P_n^{(alpha, beta)} at x, shape (n+1,) + x.shape.

    Classical normalization, P_j(1) = binom(j + alpha, j).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    out[0] = 1.0
    if n == 0:
        return out
    a, b = alpha, beta
    out[1] = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x
    for k in range(2, n + 1):
        s = 2 * k + a + b
        c1 = 2.0 * k * (k + a + b) * (s - 2.0)
        c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b)
        c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s
        out[k] = (c2 * out[k - 1] - c3 * out[k - 2]) / c1
    return out


def jacobi_deriv_table(alpha: float, beta: float, n: int, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros((n + 1,) + x.shape)
    if n == 0:
        return out
    shifted = jacobi_table(alpha + 1.0, beta + 1.0, n - 1, x)
    for k in range(1, n + 1):
        out[k] = 0.5 * (k + alpha + beta + 1.0) * shifted[k - 1]
    return out


def legendre_eval(j: int, x):
    """Legendre polynomial L_j(x), normalized by L_j(1) = 1."""
    val = jacobi_table(0.0, 0.0, j, x)[j]
    return float(val) if np.ndim(val) == 0 else val


def jacobi_eval(ell: float, j: int, x):
    """Jacobi polynomial J_j^ell with weight (1 - x)**ell on [-1, 1].

    ``int (1-x)**ell J_i J_j dx = 2**(ell+1) / (2j + ell + 1) delta_ij``.
    """
    if ell <= -1:
        raise ValueError("Jacobi parameter must exceed -1")
    val = jacobi_table(float(ell), 0.0, j, x)[j]
    return float(val) if np.ndim(val) == 0 else val

# }}}


# {{{ Duffy transformation

def duffy_map(dim: int, z) -> np.ndarray:
    """Map points of the cube [-1, 1]^dim onto the reference simplex."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if dim == 1:
        x = z.copy()
    elif dim == 2:
        x = np.stack([z[:, 0] * (1 - z[:, 1]) / 2, z[:, 1]], axis=1)
    elif dim == 3:
        h2 = (1 - z[:, 1]) / 2
        h3 = (1 - z[:, 2]) / 2
        x = np.stack([z[:, 0] * h2 * h3, z[:, 1] * h3, z[:, 2]], axis=1)
    else:
        raise ValueError(f"unsupported dimension {dim}")
    return x


def duffy_jacobian(dim: int, z) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if dim == 1:
        return np.ones(len(z))
    if dim == 2:
        return (1 - z[:, 1]) / 2
    if dim == 3:
        return (1 - z[:, 1]) / 2 * ((1 - z[:, 2]) / 2) ** 2
    raise ValueError(f"unsupported dimension {dim}")


def collapsed_coordinates(dim: int, x) -> np.ndarray:
    """Inverse Duffy map with limiting values on the collapsed set."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if dim == 1:
        return x.copy()
    if dim == 2:
        den = 1 - x[:, 1]
        safe = np.where(np.abs(den) > _COLLAPSE_EPS, den, 1.0)
        a = np.where(np.abs(den) > _COLLAPSE_EPS, 2 * x[:, 0] / safe, 0.0)
        return np.stack([a, x[:, 1]], axis=1)
    if dim == 3:
        den3 = 1 - x[:, 2]
        ok3 = np.abs(den3) > _COLLAPSE_EPS
        b = np.where(ok3, 2 * x[:, 1] / np.where(ok3, den3, 1.0), 0.0)
        den1 = 1 - 2 * x[:, 1] - x[:, 2]
        ok1 = np.abs(den1) > _COLLAPSE_EPS
        a = np.where(ok1, 4 * x[:, 0] / np.where(ok1, den1, 1.0), 0.0)
        return np.stack([a, b, x[:, 2]], axis=1)
    raise ValueError(f"unsupported dimension {dim}")

# }}}


# {{{ Koornwinder functions

def koornwinder_sqnorm(index: PolyIndex | tuple) -> float:
    """Squared L2 norm of the un-normalized Koornwinder function."""
    t = index.indices if isinstance(index, PolyIndex) else tuple(index)
    if len(t) == 1:
        return 2.0 / (2 * t[0] + 1)
    if len(t) == 2:
        j, ell = t
        return 2.0 / ((2 * j + 1) * (j + ell + 1))
    j1, j2, j3 = t
    return (2.0 / (2 * j1 + 1)) * (2.0 / (2 * j1 + 2 * j2 + 2)) * (2.0 / (2 * j1 + 2 * j2 + 2 * j3 + 3))


def koornwinder_eval(index: PolyIndex | tuple, x):
    """Un-normalized Koornwinder function at points of the reference simplex.

    ``x`` is a single point (a float in 1D) or an array of shape (npts, dim).
    """
    t = index.indices if isinstance(index, PolyIndex) else tuple(index)
    dim = len(t)
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or (arr.ndim == 1 and dim > 1)
    val = _koornwinder_values(dim, sum(t), arr.reshape(-1, dim), [t])[:, 0]
    return float(val[0]) if single else val


def _koornwinder_values(dim, p, pts, index_tuples):
    z = collapsed_coordinates(dim, pts)
    npts = len(pts)
    out = np.empty((npts, len(index_tuples)))
    if dim == 1:
        leg = jacobi_table(0.0, 0.0, p, z[:, 0])
        for k, (j,) in enumerate(index_tuples):
            out[:, k] = leg[j]
        return out
    if dim == 2:
        pmax = max(sum(t) for t in index_tuples)
        leg = jacobi_table(0.0, 0.0, pmax, z[:, 0])
        w = (1 - z[:, 1]) / 2
        # fill a (nbasis, npts) array grouped by the first index, then transpose
        groups = {}
        for k, (j, ell) in enumerate(index_tuples):
            groups.setdefault(j, ([], []))
            groups[j][0].append(k)
            groups[j][1].append(ell)
        out_t = np.empty((len(index_tuples), npts))
        wj = np.ones(npts)
        for j in range(max(groups) + 1):
            if j in groups:
                ks, ells = groups[j]
                jac = jacobi_table(2.0 * j + 1, 0.0, max(ells), z[:, 1])
                out_t[ks] = jac[ells] * (leg[j] * wj)
            wj = wj * w
        return out_t.T
    pmax = max(sum(t) for t in index_tuples)
    leg = jacobi_table(0.0, 0.0, pmax, z[:, 0])
    w2 = (1 - z[:, 1]) / 2
    w3 = (1 - z[:, 2]) / 2
    jac2, jac3 = {}, {}
    for k, (j1, j2, j3) in enumerate(index_tuples):
        if j1 not in jac2:
            jac2[j1] = jacobi_table(2.0 * j1 + 1, 0.0, pmax - j1, z[:, 1])
        s = j1 + j2
        if s not in jac3:
            jac3[s] = jacobi_table(2.0 * s + 2, 0.0, pmax - s, z[:, 2])
        out[:, k] = leg[j1] * jac2[j1][j2] * w2 ** j1 * jac3[s][j3] * w3 ** s
    return out


def _koornwinder_grads(dim, pts, index_tuples):
    """Reference-coordinate gradients, shape (npts, nbasis, dim); dim 1 or 2."""
    z = collapsed_coordinates(dim, pts)
    npts = len(pts)
    out = np.zeros((npts, len(index_tuples), dim))
    pmax = max(sum(t) for t in index_tuples)
    dleg = jacobi_deriv_table(0.0, 0.0, pmax, z[:, 0])
    if dim == 1:
        for k, (j,) in enumerate(index_tuples):
            out[:, k, 0] = dleg[j]
        return out
    if dim != 2:
        raise NotImplementedError("gradients are provided in 1D and 2D only")
    a, y = z[:, 0], z[:, 1]
    leg = jacobi_table(0.0, 0.0, pmax, a)
    w = (1 - y) / 2
    cache = {}
    for k, (j, ell) in enumerate(index_tuples):
        if j not in cache:
            cache[j] = (jacobi_table(2.0 * j + 1, 0.0, pmax - j, y),
                        jacobi_deriv_table(2.0 * j + 1, 0.0, pmax - j, y))
        jv, jd = cache[j][0][ell], cache[j][1][ell]
        if j == 0:
            out[:, k, 1] = jd
            continue
        wm1 = w ** (j - 1)
        out[:, k, 0] = dleg[j] * jv * wm1
        out[:, k, 1] = dleg[j] * a * jv * wm1 / 2 + leg[j] * (jd * w ** j - 0.5 * j * jv * wm1)
    return out

# }}}


@dataclass(frozen=True)
class ModalBasis:
    """Graded L2-orthonormal Koornwinder basis of total degree <= p."""

    dim: int
    degree: int
    indices: tuple = field(repr=False)
    normalization: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.indices)

    @property
    def index_tuples(self):
        return [ix.indices for ix in self.indices]

    def eval(self, pts) -> np.ndarray:
        """Basis values at reference points, shape (npts, nbasis)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return _koornwinder_values(self.dim, self.degree, pts, self.index_tuples) * self.normalization

    def grad(self, pts) -> np.ndarray:
        """Reference gradients, shape (npts, nbasis, dim)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return _koornwinder_grads(self.dim, pts, self.index_tuples) * self.normalization[None, :, None]

    def block(self, degree: int) -> slice:
        """Slice of the basis functions of total degree exactly ``degree``."""
        return slice(dim_poly(self.dim, degree - 1), dim_poly(self.dim, degree))


@lru_cache(maxsize=64)
def build_basis(dim: int, p: int) -> ModalBasis:
    if p < 0:
        raise ValueError("degree must be nonnegative")
    idx = tuple(graded_indices(dim, p))
    norms = np.array([1.0 / math.sqrt(koornwinder_sqnorm(ix)) for ix in idx])
    norms.setflags(write=False)
    return ModalBasis(dim, p, idx, norms)
