import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdg.dg import DGSolution, Discretization, ProblemSpec, constant_field, constant_scalar, solve
from hyperdg.mesh import gen_structured
from hyperdg.norms import dg_error, dg_norm, l2_error
from hyperdg.study import build_manufactured, build_testcase1


def _zero_solution(mesh, p, spec):
    disc = Discretization(mesh, p, spec)
    return DGSolution(mesh, p, np.zeros((mesh.n_elements, disc.n_basis)), disc)


def _random_solution(mesh, p, spec, seed):
    disc = Discretization(mesh, p, spec)
    rng = np.random.default_rng(seed)
    return DGSolution(mesh, p, rng.standard_normal((mesh.n_elements, disc.n_basis)), disc)


def test_exact_polynomial_has_zero_error():
    spec, u = build_manufactured(3)
    sol = solve(gen_structured(4, 4), 3, spec)
    rep = dg_error(sol, u)
    assert rep.l2_error < 1e-11
    assert max(rep.components()) < 1e-11


def test_unit_function_against_zero():
    spec, _ = build_manufactured(1)
    sol = _zero_solution(gen_structured(3, 3), 1, spec)
    assert l2_error(sol, lambda x: np.ones(len(x))) == pytest.approx(2.0, rel=1e-13)


def test_components_sum_and_sign():
    spec, u = build_testcase1(1.5)
    sol = solve(gen_structured(4, 4), 5, spec)
    rep = dg_error(sol, u)
    assert all(c >= 0 for c in rep.components())
    assert rep.dg_error ** 2 == pytest.approx(sum(c * c for c in rep.components()), rel=1e-12)


def test_jump_component_only_sees_discrete_jumps():
    spec, _ = build_manufactured(2)
    sol = _random_solution(gen_structured(3, 3), 2, spec, 0)
    smooth = lambda x: np.sin(x[:, 0]) + x[:, 1] ** 2
    direct = 0.0
    disc = sol.disc
    for e, ed in enumerate(disc.elements):
        for fd in ed.facets:
            if fd.is_boundary or not fd.has_inflow:
                continue
            ut = fd.V @ sol.coeffs[e]
            un = disc.basis.eval(disc.maps[fd.neighbor].inverse(fd.x)) @ sol.coeffs[fd.neighbor]
            direct += np.sum(fd.w * np.abs(fd.nbeta) * (ut - un) ** 2)
    assert dg_error(sol, smooth).jump ** 2 == pytest.approx(direct, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_triangle_inequality(seed):
    spec, u = build_testcase1(2.5)
    sol = _random_solution(gen_structured(2, 2), 2, spec, seed)
    zero = _zero_solution(gen_structured(2, 2), 2, spec)
    assert dg_error(sol, u).dg_error <= dg_error(zero, u).dg_error + dg_norm(sol) + 1e-10


@settings(max_examples=10, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2 ** 31))
def test_scaling(t, seed):
    spec, _ = build_manufactured(2)
    mesh = gen_structured(2, 2)
    sol = _random_solution(mesh, 2, spec, seed)
    scaled = DGSolution(mesh, 2, t * sol.coeffs, sol.disc)
    zero = lambda x: np.zeros(len(x))
    a, b = dg_error(sol, zero), dg_error(scaled, zero)
    assert b.l2_error == pytest.approx(abs(t) * a.l2_error, rel=1e-12, abs=1e-14)
    assert b.dg_error == pytest.approx(abs(t) * a.dg_error, rel=1e-12, abs=1e-14)


def test_quadrature_refinement_consistency():
    spec, _ = build_manufactured(2)
    sol = _random_solution(gen_structured(3, 3), 3, spec, 7)
    smooth = lambda x: np.exp(0.5 * x[:, 0]) * np.cos(x[:, 1])
    a, b = l2_error(sol, smooth), l2_error(sol, smooth, extra_degree=4)
    assert abs(a - b) / b < 1e-8


def test_reaction_weight_is_applied():
    c = 3.0
    spec = ProblemSpec(2, constant_field([1.0, 1.0]), constant_scalar(c), constant_scalar(0.0),
                       constant_scalar(0.0), cbar0=c, beta_constant=True, c_constant=True)
    sol = _zero_solution(gen_structured(2, 2), 1, spec)
    rep = dg_error(sol, lambda x: np.ones(len(x)))
    assert rep.volume == pytest.approx(c * 2.0, rel=1e-13)
    # boundary parts: |n.beta| = 1 on every side of the square, each side has length 2
    assert rep.inflow ** 2 == pytest.approx(4.0, rel=1e-13)
    assert rep.outflow ** 2 == pytest.approx(4.0, rel=1e-13)
    assert rep.jump == 0.0


def test_testcase1_l2_monotone():
    spec, u = build_testcase1(2.5)
    mesh = gen_structured(4, 4)
    errs = [l2_error(solve(mesh, p, spec), u) for p in range(4, 17, 3)]
    assert all(a > b for a, b in zip(errs, errs[1:]))
