import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdg.mesh import (CHARACTERISTIC, INFLOW, OUTFLOW, AdmissibilityError, MeshParseError,
                          MeshTopologyError, affine_map, build_mesh, check_admissible,
                          classify_facets, gen_structured, load_mesh, save_mesh)
from hyperdg.orthopoly import REFERENCE_VERTICES

TWO_TRIANGLES = """\
simplexmesh 2
# unit square
4 2
0 0
1 0
1 1
0 1
0 1 2
0 2 3
"""

BETA = np.array([1.0, 1.0])


def test_load_two_triangles():
    m = load_mesh(io.StringIO(TWO_TRIANGLES))
    assert (len(m.vertices), m.n_elements, m.n_facets) == (4, 2, 5)
    assert sum(not m.is_boundary_facet(f) for f in range(m.n_facets)) == 1
    assert m.h == pytest.approx(math.sqrt(2))


def test_repeated_vertex_is_topology_error():
    with pytest.raises(MeshTopologyError):
        load_mesh(TWO_TRIANGLES.replace("0 2 3", "0 2 2"))


def test_parse_errors_carry_line_numbers():
    with pytest.raises(MeshParseError) as exc:
        load_mesh(TWO_TRIANGLES.replace("1 1\n", "1 x\n"))
    assert exc.value.lineno == 6
    with pytest.raises(MeshParseError):
        load_mesh("trianglemesh 2\n")
    with pytest.raises(MeshParseError):
        load_mesh(TWO_TRIANGLES + "0 1 3\n")


def test_degenerate_element_rejected():
    with pytest.raises(MeshTopologyError):
        build_mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_orientation_fixed_on_load():
    m = build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    P = m.vertices[m.elements[0]]
    assert np.linalg.det(np.array([P[1] - P[0], P[2] - P[0]])) > 0


def test_nonconforming_rejected():
    # vertex 4 hangs in the middle of the shared edge of two triangles
    verts = [[0, 0], [2, 0], [2, 2], [0, 2], [1, 1]]
    with pytest.raises(MeshTopologyError):
        build_mesh(verts, [[0, 1, 2], [0, 4, 3], [4, 2, 3]])


def test_facet_shared_by_three_elements_rejected():
    verts = [[0, 0], [1, 0], [0, 1], [0, -1], [-1, 0.5]]
    with pytest.raises(MeshTopologyError):
        build_mesh(verts, [[0, 1, 2], [0, 1, 3], [0, 1, 4]])


def test_round_trip():
    m = gen_structured(3, 2, "with_flow")
    buf = io.StringIO()
    save_mesh(m, buf)
    m2 = load_mesh(buf.getvalue())
    np.testing.assert_array_equal(m.vertices, m2.vertices)
    np.testing.assert_array_equal(m.elements, m2.elements)


def test_generator_counts():
    assert gen_structured(4, 4).n_elements == 32
    assert gen_structured(5, 5).n_elements == 50
    m = gen_structured(1, 1)
    assert m.n_elements == 2
    assert sum(not m.is_boundary_facet(f) for f in range(m.n_facets)) == 1


def test_generator_alignment_with_zero_line():
    for nx in (4, 5, 6, 7):
        on_edges = np.any(np.isclose(gen_structured(nx, nx).vertices[:, 0], 0.0))
        assert on_edges == (nx % 2 == 0)


def test_sigma_constant_across_sizes():
    sig = {round(gen_structured(n, n).sigma, 12) for n in (1, 3, 8)}
    assert len(sig) == 1


def test_every_facet_has_one_or_two_owners():
    m = gen_structured(4, 3)
    count = np.zeros(m.n_facets, int)
    for e in range(m.n_elements):
        for f in m.element_facets[e]:
            count[f] += 1
    assert set(count) <= {1, 2}
    assert np.all((count == 2) == (m.facet_elements[:, 1] >= 0))


def test_classification_reference_triangle():
    m = build_mesh(REFERENCE_VERTICES[2], [[0, 1, 2]])
    cls = classify_facets(m, BETA)
    # local facet k is opposite local vertex k
    assert cls.classes[0][0] == OUTFLOW  # {(1,-1),(0,1)}
    assert cls.flux_sign_values[0][0][0] == pytest.approx(3 / math.sqrt(5))
    assert cls.classes[0][2] == INFLOW  # {(-1,-1),(1,-1)}
    assert cls.flux_sign_values[0][2][0] == pytest.approx(-1.0)
    np.testing.assert_allclose(cls.normals[0][0], np.array([2, 1]) / math.sqrt(5))


def test_characteristic_facet():
    m = build_mesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    cls = classify_facets(m, np.array([1.0, 0.0]))
    # facet opposite vertex 2 is y = 0 with normal (0, -1)
    assert cls.classes[0][2] == CHARACTERISTIC


def test_variable_field_classes():
    m = gen_structured(2, 2)
    cls = classify_facets(m, lambda x: np.stack([x[:, 1], -x[:, 0]], axis=1))
    assert "mixed" in {c for row in cls.classes for c in row}


def test_admissible_against_flow():
    rep = check_admissible(gen_structured(4, 4, "against_flow"), BETA)
    assert rep.verdict
    assert sorted(rep.upwind_order) == list(range(32))


def test_with_flow_fails_a1():
    rep = check_admissible(gen_structured(4, 4, "with_flow"), BETA)
    assert not rep.verdict
    assert not np.all(rep.a1_ok)
    assert 2 in set(rep.outflow_facet_count.tolist())


def test_single_element_admissible():
    rep = check_admissible(build_mesh(REFERENCE_VERTICES[2], [[0, 1, 2]]), BETA)
    assert rep.verdict and rep.upwind_order == (0,)


def test_variable_field_not_applicable():
    rep = check_admissible(gen_structured(2, 2), lambda x: np.stack([2 - x[:, 1] ** 2, 2 - x[:, 0]], axis=1))
    assert not rep.applicable and not rep.verdict


def test_upwind_order_respects_dependencies():
    m = gen_structured(5, 4)
    rep = check_admissible(m, BETA)
    pos = {e: i for i, e in enumerate(rep.upwind_order)}
    cls = classify_facets(m, BETA)
    for e in range(m.n_elements):
        for k, c in enumerate(cls.classes[e]):
            f = m.element_facets[e, k]
            if c == INFLOW and not m.is_boundary_facet(f):
                assert pos[m.neighbor(e, f)] < pos[e]


@pytest.mark.parametrize("n", [1, 2, 5, 10, 20])
@pytest.mark.parametrize("diagonal", ["against_flow", "with_flow"])
def test_admissibility_implies_acyclic(n, diagonal):
    for beta in (BETA, np.array([1.0, 0.3]), np.array([-0.5, 1.0])):
        rep = check_admissible(gen_structured(n, n, diagonal), beta)
        if np.all(rep.a1_ok) and all(rep.a2_ok.values()):
            assert rep.upwind_order is not None and rep.verdict


@settings(max_examples=20, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 3), st.floats(-3, 3))
def test_classification_translation_invariant(dx, dy, bx, by):
    m = gen_structured(3, 2)
    m2 = build_mesh(m.vertices + np.array([dx, dy]), m.elements)
    beta = np.array([bx, by])
    assert classify_facets(m, beta).classes == classify_facets(m2, beta).classes


def test_affine_map_identity_and_scaling():
    m = build_mesh(REFERENCE_VERTICES[2], [[0, 1, 2]])
    amap = affine_map(m, 0)
    np.testing.assert_allclose(amap.A, np.eye(2), atol=1e-15)
    assert amap.det == pytest.approx(1.0)
    m2 = build_mesh(2 * REFERENCE_VERTICES[2], [[0, 1, 2]])
    assert affine_map(m2, 0).det == pytest.approx(4.0)
    xi = np.array([[0.1, -0.2], [0.0, 0.5]])
    np.testing.assert_allclose(amap.inverse(amap.forward(xi)), xi)


def test_affine_map_outflow_alignment():
    m = gen_structured(3, 3)
    for e in range(m.n_elements):
        amap = affine_map(m, e, BETA)
        # image of the reference outflow facet (opposite the apex, index 2)
        assert amap.normals[2] @ BETA > 0
        ends = amap.forward(np.array([[-1.0, -1.0], [1.0, -1.0]]))
        np.testing.assert_allclose(np.delete(amap.vertices, 2, axis=0), ends, atol=1e-14)
        assert amap.facet_scale(2) == pytest.approx(amap.facet_measures[2] / 2.0)


def test_affine_map_raises_without_unique_outflow():
    m = gen_structured(2, 2, "with_flow")
    bad = [e for e in range(m.n_elements) if not check_admissible(m, BETA).a1_ok[e]]
    with pytest.raises(AdmissibilityError):
        affine_map(m, bad[0], BETA)
