"""Centering, Gram matrices, sketching, projection, and the QP solver."""

import numpy as np
import pytest

from hetmix.gme import (
    GmeSolverParams,
    GramMatrix,
    SketchConfig,
    ce_gme,
    center_columns,
    gme_objective,
    gram,
    jl_required_dim,
    project_feasible,
    sketch,
    solve_gme,
)
from hetmix.mixing import MixingMatrix, metropolis_hastings, uniform_averaging, validate
from hetmix.topology import build_complete, build_ring


# --- oracles -----------------------------------------------------------

def _project_complete2_closed_form(m):
    """On two fully-connected nodes the polytope is the segment
    [[a, 1-a], [1-a, a]], so the projection has a one-line solution."""
    a = (2.0 + m[0, 0] + m[1, 1] - m[0, 1] - m[1, 0]) / 4.0
    a = min(1.0, max(0.0, a))
    return np.array([[a, 1.0 - a], [1.0 - a, a]])


def _period3_gradients(rng, d=10):
    """Columns repeating with period 3 and zero global mean on six nodes."""
    g0, g1 = rng.standard_normal(d), rng.standard_normal(d)
    return np.column_stack([g0, g1, -g0 - g1] * 2)


# --- centering and Gram matrices --------------------------------------

def test_center_columns():
    g = np.array([[1.0, 3.0], [0.0, -2.0]])
    c = center_columns(g)
    np.testing.assert_allclose(c, [[-1.0, 1.0], [1.0, -1.0]])
    assert np.allclose(c.mean(axis=1), 0.0)


def test_gram_matches_definition_and_invariants():
    rng = np.random.default_rng(11)
    gc = center_columns(rng.standard_normal((7, 5)))
    gm = gram(gc)
    np.testing.assert_allclose(gm.gamma, gc.T @ gc, atol=1e-12)
    assert gm.n == 5
    assert np.array_equal(gm.gamma, gm.gamma.T)
    assert np.linalg.eigvalsh(gm.gamma)[0] >= -1e-10
    assert np.abs(gm.gamma.sum(axis=1)).max() < 1e-10


def test_gram_constructor_rejects():
    with pytest.raises(ValueError, match="square"):
        GramMatrix(np.ones((2, 3)))
    with pytest.raises(ValueError, match="asymmetric"):
        GramMatrix(np.array([[1.0, 0.5], [-0.5, 1.0]]))
    sym = np.array([[1.0, -0.2], [-0.2, 1.0]])
    with pytest.raises(ValueError, match="sum to zero"):
        GramMatrix(sym)  # PSD and symmetric, but not centered
    neg = np.array([[-1.0, 1.0], [1.0, -1.0]])
    with pytest.raises(ValueError, match="PSD"):
        GramMatrix(neg)
    GramMatrix(np.zeros((3, 3)))  # zero matrix is fine


# --- sketching ---------------------------------------------------------

def test_sketch_shape_determinism_linearity():
    rng = np.random.default_rng(12)
    g = rng.standard_normal((30, 6))
    cfg = SketchConfig(k=5, seed=9)
    s1, s2 = sketch(g, cfg), sketch(g, cfg)
    assert s1.shape == (5, 6)
    np.testing.assert_array_equal(s1, s2)
    assert not np.allclose(s1, sketch(g, SketchConfig(k=5, seed=10)))
    np.testing.assert_allclose(sketch(2.0 * g, cfg), 2.0 * s1, rtol=1e-12)


def test_sketch_config_rejects_nonpositive_k():
    with pytest.raises(ValueError):
        SketchConfig(k=0, seed=1)


def test_jl_required_dim():
    assert jl_required_dim(16, 0.05, 0.3) == 6410
    assert jl_required_dim(1, 0.5, 1.0) == 70
    for bad in ((0, 0.1, 0.1), (4, 1.0, 0.1), (4, 0.1, 0.0)):
        with pytest.raises(ValueError):
            jl_required_dim(*bad)


def test_sketch_preserves_pairwise_inner_products():
    """At k = 200 the normalized products of 8 unit-scale vectors in R^1000
    should essentially never drift by 0.3 max||u||^2."""
    failures = 0
    for trial in range(20):
        rng = np.random.default_rng(100 + trial)
        u = rng.standard_normal((1000, 8))
        s = sketch(u, SketchConfig(k=200, seed=500 + trial))
        exact = u.T @ u
        approx = s.T @ s / 200.0
        bound = 0.3 * float(np.max(np.sum(u**2, axis=0)))
        if np.abs(approx - exact).max() > bound:
            failures += 1
    assert failures <= 1


# --- projection --------------------------------------------------------

def test_projection_matches_closed_form_on_two_nodes():
    rng = np.random.default_rng(13)
    graph = build_complete(2)
    for _ in range(50):
        m = rng.uniform(-3, 3, (2, 2))
        got = project_feasible(m, graph).w
        np.testing.assert_allclose(
            got, _project_complete2_closed_form(m), atol=1e-8
        )


def test_projection_of_zeros_is_uniform_on_support():
    w = project_feasible(np.zeros((4, 4)), build_ring(4)).w
    expected = np.where(build_ring(4).support_mask(), 1 / 3, 0.0)
    np.testing.assert_allclose(w, expected, atol=1e-9)


def test_projection_prefers_the_identity_for_diagonal_targets():
    w = project_feasible(5.0 * np.eye(4), build_ring(4)).w
    np.testing.assert_allclose(w, np.eye(4), atol=1e-6)


def test_projection_feasible_and_no_closer_point(tmp_seed=14):
    rng = np.random.default_rng(tmp_seed)
    for _ in range(20):
        n = int(rng.integers(3, 9))
        graph = build_ring(n)
        m = rng.uniform(-2, 2, (n, n))
        w = project_feasible(m, graph)
        assert validate(w.w, graph, 1e-8) is None
        # optimality: nothing feasible is closer than the projection
        mh = metropolis_hastings(graph).w
        d_proj = np.sum((m - w.w) ** 2)
        for t in (1.0, 0.5, 0.1):
            cand = (1 - t) * w.w + t * mh
            assert d_proj <= np.sum((m - cand) ** 2) + 1e-8


def test_projection_is_idempotent():
    rng = np.random.default_rng(15)
    graph = build_ring(5)
    w = project_feasible(rng.uniform(-1, 2, (5, 5)), graph).w
    again = project_feasible(w, graph).w
    np.testing.assert_allclose(again, w, atol=1e-7)


def test_projection_shape_mismatch_and_cap():
    graph = build_ring(6)
    with pytest.raises(ValueError):
        project_feasible(np.zeros((4, 4)), graph)
    params = GmeSolverParams(projection_max_iters=2)
    with pytest.raises(ArithmeticError, match="converge"):
        project_feasible(np.random.default_rng(0).uniform(-2, 2, (6, 6)),
                         graph, params)


def test_solver_params_validation():
    with pytest.raises(ValueError):
        GmeSolverParams(max_iters=0)
    with pytest.raises(ValueError):
        GmeSolverParams(tol=0.0)


# --- objective and solver ---------------------------------------------

def test_objective_hand_values():
    gamma = GramMatrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert gme_objective(gamma, MixingMatrix(np.eye(2))) == pytest.approx(2.0)
    assert gme_objective(gamma, uniform_averaging(2)) == pytest.approx(0.0)


def test_objective_equals_mixed_gradient_gap():
    rng = np.random.default_rng(16)
    g = rng.standard_normal((8, 6))
    w = metropolis_hastings(build_ring(6))
    direct = np.sum((g @ w.w - g.mean(axis=1, keepdims=True)) ** 2)
    assert gme_objective(gram(center_columns(g)), w) == pytest.approx(direct, rel=1e-9)


def test_solver_reaches_zero_on_complete_graph_from_identity():
    rng = np.random.default_rng(17)
    gamma = gram(center_columns(rng.standard_normal((5, 4))))
    graph = build_complete(4)
    w = solve_gme(gamma, graph, init=MixingMatrix(np.eye(4)))
    # uniform averaging annihilates the centered Gram, so zero is
    # attainable; the default stop leaves a remainder of order
    # tol * initial objective
    assert gme_objective(gamma, w) <= 1e-8 * np.linalg.norm(gamma.gamma, 2)


def test_solver_never_worse_than_init_and_feasible():
    rng = np.random.default_rng(18)
    for _ in range(10):
        n = int(rng.integers(3, 8))
        graph = build_ring(n)
        gamma = gram(center_columns(rng.standard_normal((int(rng.integers(2, 6)), n))))
        w = solve_gme(gamma, graph)
        assert validate(w.w, graph, 1e-8) is None
        mh_obj = gme_objective(gamma, metropolis_hastings(graph))
        assert gme_objective(gamma, w) <= mh_obj + 1e-12


def test_solver_objective_scales_linearly():
    rng = np.random.default_rng(19)
    graph = build_ring(5)
    gamma = center_columns(rng.standard_normal((4, 5)))
    g1 = gram(gamma)
    g5 = GramMatrix(5.0 * g1.gamma)
    o1 = gme_objective(g1, solve_gme(g1, graph))
    o5 = gme_objective(g5, solve_gme(g5, graph))
    assert o5 == pytest.approx(5.0 * o1, rel=1e-6, abs=1e-12)


def test_solver_handles_degenerate_grams():
    graph = build_ring(4)
    mh = metropolis_hastings(graph)
    w = solve_gme(GramMatrix(np.zeros((4, 4))), graph)
    np.testing.assert_array_equal(w.w, mh.w)


def test_solver_drives_structured_instance_to_zero():
    """Uniform thirds cancel period-3 columns on a 6-ring, so the optimum
    is zero; the solver must find it even from a far-away start."""
    rng = np.random.default_rng(20)
    gamma = gram(center_columns(_period3_gradients(rng)))
    graph = build_ring(6)
    start = project_feasible(rng.uniform(0, 1, (6, 6)), graph)
    w = solve_gme(gamma, graph, init=start)
    assert gme_objective(gamma, w) <= 1e-6 * np.linalg.norm(gamma.gamma, 2)


def test_ce_pipeline_determinism_and_zero_gradients():
    rng = np.random.default_rng(21)
    graph = build_ring(6)
    g = rng.standard_normal((40, 6))
    cfg = SketchConfig(k=8, seed=3)
    w1, w2 = ce_gme(g, graph, cfg), ce_gme(g, graph, cfg)
    np.testing.assert_array_equal(w1.w, w2.w)
    assert validate(w1.w, graph, 1e-8) is None
    wz = ce_gme(np.zeros((40, 6)), graph, cfg)
    np.testing.assert_array_equal(wz.w, metropolis_hastings(graph).w)
