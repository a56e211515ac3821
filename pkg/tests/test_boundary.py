import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdvgraph import boundary, krein
from kdvgraph.boundary import (
    SECTION_61_MATRIX,
    BoundaryError,
    BoundaryOperator,
    assemble_global,
    classify,
    sample_bicontraction,
    sample_unitary,
    vertex_forms,
)
from kdvgraph.graph_model import Edge, MetricGraph, loop_graph, path_graph, star_graph

seeds = st.integers(0, 2 ** 31)


def figure_eight():
    return MetricGraph(["v"], [Edge("e1", 0.0, 1.0, "v", "v", 1.0, 0.0),
                               Edge("e2", 0.0, 0.8, "v", "v", 0.7, 0.5)])


def test_assemble_loop_identity():
    g, bc = boundary.loop_periodic()
    np.testing.assert_array_equal(assemble_global(g, bc), np.eye(3))


def test_assemble_path_two_blocks():
    g = path_graph(3)
    A, B = np.full((3, 3), 2.0), np.full((3, 3), 5.0)
    L = assemble_global(g, BoundaryOperator({"v1": A, "v2": B}))
    assert L.shape == (9, 9)
    np.testing.assert_array_equal(L[3:6, 0:3], A)
    np.testing.assert_array_equal(L[6:9, 3:6], B)
    assert np.count_nonzero(L) == 18


def test_assemble_star_equals_block():
    g = star_graph(2, 1)
    blk = np.arange(18, dtype=float).reshape(3, 6)
    np.testing.assert_array_equal(assemble_global(g, BoundaryOperator({"v": blk})), blk)


def test_missing_and_misshaped_blocks():
    g = loop_graph()
    with pytest.raises(BoundaryError, match="missing block"):
        assemble_global(g, BoundaryOperator({}))
    with pytest.raises(BoundaryError, match="expected"):
        assemble_global(g, BoundaryOperator({"v": np.eye(2)}))
    with pytest.raises(BoundaryError, match="unknown vertices"):
        assemble_global(g, BoundaryOperator({"v": np.eye(3), "w": np.eye(3)}))


@pytest.mark.parametrize("factory, verdict", [
    (lambda: boundary.loop_periodic(), "unitary"),
    (lambda: boundary.two_halflines(), "unitary"),
    (lambda: boundary.loop_diag(2, 0.5), "bi_contractive"),
    (lambda: (loop_graph(), BoundaryOperator({"v": np.diag([2.0, 0.5, 0.5])})), "bi_contractive"),
    (lambda: (loop_graph(), BoundaryOperator({"v": 2 * np.eye(3)})), "neither"),
])
def test_classify_examples(factory, verdict):
    g, bc = factory()
    result = classify(g, bc)
    assert result.verdict == verdict
    assert result.consistent


def test_two_halflines_builtin_matrix():
    _, bc = boundary.builtin("two_halflines_unitary")
    r2 = math.sqrt(2)
    np.testing.assert_array_equal(bc.blocks["v"], [[1, 0, 0], [r2, 1, 0], [1, r2, 1]])
    np.testing.assert_array_equal(bc.blocks["v"], SECTION_61_MATRIX)


def test_truncated_halflines_closure_dissipative():
    g, bc = boundary.two_halflines(length=5.0)
    assert g.is_finite
    per = classify(g, bc).per_vertex
    assert per["v"].verdict == "unitary"
    assert per["far"].verdict == "bi_contractive"


def test_one_sided_verdicts_on_unbalanced_stars():
    # with equal signatures contractive already implies bi-contractive, so the
    # one-sided verdicts need unbalanced vertices
    g, bc = boundary.star(0, 2)
    assert classify(g, bc).verdict == "contractive_only"
    g, bc = boundary.star(2, 0)
    assert classify(g, bc).verdict == "adjoint_contractive_only"


def test_builtin_from_string_forms():
    g1, bc1 = boundary.builtin_from_string("loop_diag(2,0.5)")
    g2, bc2 = boundary.builtin_from_string("loop_diag:2,0.5")
    np.testing.assert_array_equal(bc1.blocks["v"], bc2.blocks["v"])
    np.testing.assert_array_equal(bc1.blocks["v"], np.diag([2, 0.5, 0.5]))
    with pytest.raises(BoundaryError):
        boundary.builtin_from_string("nope")
    with pytest.raises(BoundaryError):
        boundary.loop_diag(0, 1)


def test_j_factor_reconstructs_form():
    B = krein.edge_block(2.0, -3.0)
    S, p, q = boundary.j_factor(B)
    J = np.diag([1.0] * p + [-1.0] * q)
    np.testing.assert_allclose(S.conj().T @ J @ S, B, atol=1e-13)
    assert (p, q) == (2, 1)


def test_sampler_deterministic():
    g = figure_eight()
    a = sample_unitary(g, "v", 11)
    b = sample_unitary(g, "v", 11)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_unitary(g, "v", 12))


def test_sampler_zero_scale():
    g = loop_graph(2.0, 1.0)
    Br, Bl = vertex_forms(g, "v")
    Sr, _, _ = boundary.j_factor(Br)
    Sl, _, _ = boundary.j_factor(Bl)
    L = sample_unitary(g, "v", 0, scale=0.0)
    np.testing.assert_allclose(L, np.linalg.solve(Sl, Sr), atol=1e-14)
    assert krein.is_krein_unitary(Br, Bl, L)


def test_unbalanced_vertex_rejected():
    with pytest.raises(BoundaryError, match="dim mismatch 0 vs 9"):
        sample_unitary(star_graph(0, 3), "v", 0)
    with pytest.raises(BoundaryError, match="unbalanced"):
        sample_bicontraction(star_graph(1, 2), "v", 0)


def test_bicontraction_zero_strictness_is_unitary():
    g = figure_eight()
    L = sample_bicontraction(g, "v", 3, strictness=0.0)
    assert classify(g, BoundaryOperator({"v": L})).verdict == "unitary"


def test_product_of_bicontractions():
    g = loop_graph()
    L1 = sample_bicontraction(g, "v", 1)
    L2 = sample_bicontraction(g, "v", 2)
    # loop forms agree on both sides, so products compose
    assert classify(g, BoundaryOperator({"v": L1 @ L2})).verdict == "bi_contractive"


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from(["loop", "eight", "star22"]))
def test_sampled_unitary_round_trip(seed, which):
    g = {"loop": loop_graph(), "eight": figure_eight(), "star22": star_graph(2, 2)}[which]
    L = sample_unitary(g, "v", seed)
    Br, Bl = vertex_forms(g, "v")
    assert krein.is_krein_unitary(Br, Bl, L)


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0.05, 1.0))
def test_sampled_bicontraction_round_trip(seed, strictness):
    g = star_graph(2, 2)
    L = sample_bicontraction(g, "v", seed, strictness)
    Br, Bl = vertex_forms(g, "v")
    assert krein.is_krein_contractive(Br, Bl, L)
    assert krein.is_krein_contractive(Bl, Br, krein.krein_adjoint(Br, Bl, L))
    assert not krein.is_krein_unitary(Br, Bl, L)
