import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdg.mesh import affine_map, gen_structured
from hyperdg.orthopoly import koornwinder_eval
from hyperdg.quadrature import (composite_refine, gauss_legendre, graded_interval_rule,
                                interval_rule, simplex_rule)


def test_gauss_legendre_examples():
    r = gauss_legendre(1)
    assert r.points[0, 0] == 0.0 and r.weights[0] == pytest.approx(2.0)
    r = gauss_legendre(2)
    np.testing.assert_allclose(r.points[:, 0], [-0.5773502691896257, 0.5773502691896257], rtol=1e-15)
    np.testing.assert_allclose(r.weights, [1.0, 1.0], rtol=1e-14)
    assert gauss_legendre(7).weights.sum() == pytest.approx(2.0, abs=1e-14)


@settings(max_examples=30)
@given(st.integers(1, 200))
def test_gauss_legendre_matches_numpy(n):
    x, w = np.polynomial.legendre.leggauss(n)
    r = gauss_legendre(n)
    np.testing.assert_allclose(r.points[:, 0], x, atol=1e-14)
    np.testing.assert_allclose(r.weights, w, atol=1e-14)
    assert np.all(np.diff(r.points[:, 0]) > 0)
    np.testing.assert_allclose(r.points[:, 0], -r.points[::-1, 0], atol=0)
    assert np.all(r.weights > 0)


def test_gauss_legendre_range():
    with pytest.raises(ValueError):
        gauss_legendre(0)
    with pytest.raises(ValueError):
        gauss_legendre(201)


def test_gauss_legendre_exactness():
    for n in (3, 8):
        r = gauss_legendre(n)
        for k in range(2 * n):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert r.integrate(r.points[:, 0] ** k) == pytest.approx(exact, abs=1e-14)


def test_simplex_rule_weights():
    for d in (0, 3, 10):
        assert simplex_rule(2, d).weights.sum() == pytest.approx(2.0, abs=1e-12)
        assert simplex_rule(3, d).weights.sum() == pytest.approx(4.0 / 3.0, abs=1e-12)
        assert np.all(simplex_rule(2, d).weights > 0)


def test_simplex_rule_orthogonality_example():
    r = simplex_rule(2, 4)
    v = koornwinder_eval((1, 0), r.points) * koornwinder_eval((0, 1), r.points)
    assert abs(r.integrate(v)) < 1e-12


def _triangle_monomial(a, b):
    x, y = sympy.symbols("x y")
    return float(sympy.integrate(sympy.integrate(x ** a * y ** b, (x, -(1 - y) / 2, (1 - y) / 2)), (y, -1, 1)))


def _tet_monomial(a, b, c):
    x, y, z = sympy.symbols("x y z")
    # the section at height z is the base triangle scaled by s = (1 - z)/2 about the origin
    s = (1 - z) / 2
    inner = sympy.integrate(x ** a * y ** b, (x, -(s - y) / 2, (s - y) / 2))
    return float(sympy.integrate(sympy.integrate(inner, (y, -s, s)) * z ** c, (z, -1, 1)))


def test_triangle_degree_closure():
    # monomial integrals of total degree <= 4 are exact with 2d + 1 points
    for d in range(5):
        r = simplex_rule(2, 2 * d + 1)
        for a in range(d + 1):
            b = d - a
            got = r.integrate(r.points[:, 0] ** a * r.points[:, 1] ** b)
            assert got == pytest.approx(_triangle_monomial(a, b), rel=1e-11, abs=1e-13)


def test_tetrahedron_exactness():
    r = simplex_rule(3, 6)
    for a, b, c in [(0, 0, 0), (2, 0, 0), (0, 2, 1), (1, 1, 1), (0, 0, 6), (2, 2, 2)]:
        got = r.integrate(r.points[:, 0] ** a * r.points[:, 1] ** b * r.points[:, 2] ** c)
        assert got == pytest.approx(_tet_monomial(a, b, c), rel=1e-11, abs=1e-13)


def test_interval_rule_exactness():
    r = interval_rule(9)
    assert r.exactness_degree >= 9
    assert r.integrate(r.points[:, 0] ** 8) == pytest.approx(2.0 / 9.0)


def test_composite_refine_identity_cases():
    r = simplex_rule(2, 6)
    assert composite_refine(r, 0.0, 0) is r
    # line outside the triangle
    assert composite_refine(r, 5.0, 10) is r


def _sqrt_plus(x):
    return np.sqrt(np.maximum(x[:, 0], 0.0))


def test_composite_refine_self_convergence():
    base = simplex_rule(2, 8)
    r12 = composite_refine(base, 0.0, 12)
    r13 = composite_refine(base, 0.0, 13)
    a, b = r12.integrate(_sqrt_plus(r12.points)), r13.integrate(_sqrt_plus(r13.points))
    assert abs(a - b) / abs(b) < 1e-7
    assert r12.weights.sum() == pytest.approx(2.0, abs=1e-12)
    assert np.all(r12.weights > 0)


def test_composite_refine_against_closed_form():
    # int over the reference triangle of max(x,0)^alpha = 2 int_0^1 x^alpha (1 - x) dx
    base = simplex_rule(2, 8)
    for alpha in (0.5, 1.5):
        exact = 2.0 * (1.0 / (alpha + 1) - 1.0 / (alpha + 2))
        errs = []
        for levels in (2, 6, 12):
            r = composite_refine(base, 0.0, levels)
            errs.append(abs(r.integrate(np.maximum(r.points[:, 0], 0.0) ** alpha) - exact))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.95, 0.95), st.integers(1, 10))
def test_composite_refine_preserves_weight_on_elements(x0, levels):
    mesh = gen_structured(3, 3)
    base = simplex_rule(2, 6)
    for e in range(mesh.n_elements):
        amap = affine_map(mesh, e)
        r = composite_refine(base, x0, levels, amap)
        assert r.weights.sum() == pytest.approx(2.0, abs=1e-12)
        # polynomials are still integrated exactly
        poly = r.points[:, 0] ** 3 - r.points[:, 1] * r.points[:, 0]
        assert r.integrate(poly) == pytest.approx(base.integrate(base.points[:, 0] ** 3 - base.points[:, 1] * base.points[:, 0]), abs=1e-12)


def test_graded_interval_rule():
    for bp in (-0.3, 0.0, 1.0):
        r = graded_interval_rule(8, bp, 20)
        assert r.weights.sum() == pytest.approx(2.0, abs=1e-13)
        exact = (2.0 / 3.0) * ((1 - bp) ** 1.5 + (1 + bp) ** 1.5)
        assert r.integrate(np.sqrt(np.abs(r.points[:, 0] - bp))) == pytest.approx(exact, rel=1e-9)
    plain = graded_interval_rule(5, None, 10)
    assert len(plain) == 5 and math.isclose(plain.weights.sum(), 2.0)
