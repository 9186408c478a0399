"""Mixing-matrix construction, validation, and spectral quantities."""

import numpy as np
import pytest

from hetmix.gme import project_feasible
from hetmix.mixing import (
    MixingMatrix,
    compose,
    consensus_factor,
    deviation_operator_norm,
    load_matrix,
    metropolis_hastings,
    optimal_spectral_gap_weights,
    pairing_matrix,
    save_matrix,
    spectral_gap,
    uniform_averaging,
    uniform_clique_averaging,
    validate,
)
from hetmix.topology import CliquePartition, Topology, build_complete, build_ring


# --- oracle ------------------------------------------------------------
# dense SVD norm of W - J, independent of the power iteration

def _dense_deviation(w):
    arr = w.w if isinstance(w, MixingMatrix) else np.asarray(w)
    n = arr.shape[0]
    return float(np.linalg.norm(arr - 1.0 / n, 2))


def _path3():
    return Topology(3, ((0, 1), (1, 2)))


# --- constructors ------------------------------------------------------

def test_metropolis_hastings_on_a_path():
    # degrees 1, 2, 1: edge weight 1/(1+2), remainder on the diagonal
    w = metropolis_hastings(_path3()).w
    expected = np.array(
        [[2 / 3, 1 / 3, 0.0], [1 / 3, 1 / 3, 1 / 3], [0.0, 1 / 3, 2 / 3]]
    )
    np.testing.assert_allclose(w, expected, atol=1e-15)


def test_metropolis_hastings_ring_is_uniform_thirds():
    w = metropolis_hastings(build_ring(5)).w
    assert np.allclose(w[w > 0], 1 / 3)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)


def test_metropolis_hastings_complete_is_uniform_averaging():
    np.testing.assert_allclose(
        metropolis_hastings(build_complete(4)).w, uniform_averaging(4).w, atol=1e-15
    )


def test_metropolis_hastings_always_valid_and_contracting():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        edges = build_complete(n).edges
        keep = rng.random(len(edges)) < 0.6
        kept = tuple(e for e, k in zip(edges, keep) if k)
        try:
            graph = Topology(n, kept)
        except ValueError:
            continue  # disconnected draw
        w = metropolis_hastings(graph)
        assert validate(w, graph) is None
        assert np.allclose(w.w, w.w.T)
        # positive diagonal plus connectivity makes the chain primitive
        assert _dense_deviation(w) < 1.0


def test_uniform_clique_averaging_blocks():
    w = uniform_clique_averaging(CliquePartition(((0, 1), (2,))))
    expected = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(w.w, expected, atol=1e-15)
    # validated against a graph when one is supplied
    uniform_clique_averaging(CliquePartition(((0, 1), (2,))), _path3())
    with pytest.raises(ValueError, match="support"):
        uniform_clique_averaging(CliquePartition(((0, 2), (1,))), _path3())


def test_pairing_matrix():
    w = pairing_matrix(4).w
    expected = np.zeros((4, 4))
    expected[:2, :2] = 0.5
    expected[2:, 2:] = 0.5
    np.testing.assert_allclose(w, expected, atol=1e-15)
    with pytest.raises(ValueError):
        pairing_matrix(5)


# --- the MixingMatrix invariants --------------------------------------

def test_constructor_rejects_bad_matrices():
    with pytest.raises(ValueError, match="square"):
        MixingMatrix(np.ones((2, 3)))
    with pytest.raises(ValueError, match="finite"):
        MixingMatrix(np.array([[np.nan, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValueError, match="outside"):
        MixingMatrix(np.array([[1.1, -0.1], [-0.1, 1.1]]))
    with pytest.raises(ValueError, match="row 0"):
        MixingMatrix(np.array([[0.6, 0.6], [0.4, 0.4]]))
    with pytest.raises(ValueError, match="column 0"):
        # rows sum to one, columns do not
        MixingMatrix(np.array([[0.6, 0.4], [0.6, 0.4]]))


def test_constructor_clamps_roundoff_noise():
    eps = 1e-13
    w = MixingMatrix(np.array([[1.0 + eps, -eps], [-eps, 1.0 + eps]]))
    np.testing.assert_array_equal(w.w, np.eye(2))
    assert not w.w.flags.writeable


def test_wider_sum_tolerance_also_widens_the_clamp():
    off = 4e-9
    m = np.array([[1.0 + off, -off], [-off, 1.0 + off]])
    with pytest.raises(ValueError):
        MixingMatrix(m)
    w = MixingMatrix(m, sum_atol=1e-8)
    np.testing.assert_array_equal(w.w, np.eye(2))


def test_validate_reports_first_violation_in_order():
    g = build_ring(4)
    assert validate(np.ones((3, 3)) / 3, g).kind == "shape"
    bad = np.full((4, 4), 0.25)
    bad[0, 0] = np.inf
    assert validate(bad, g).kind == "finite"
    bad = np.full((4, 4), 0.25)
    bad[0, 0], bad[0, 2] = 1.2, -0.7
    v = validate(bad, g)
    # the worst offender wins: -0.7 is further outside than 1.2
    assert v.kind == "range" and v.index == (0, 2)
    bad = np.full((4, 4), 0.25)
    bad[1, 1] = 0.5
    assert validate(bad, g).kind == "row_sum"
    # uniform averaging uses the missing chords of the ring
    v = validate(uniform_averaging(4), g)
    assert v.kind == "support" and v.index == (0, 2)
    assert validate(metropolis_hastings(g), g) is None
    assert "support" in str(v)


def test_validate_single_atol_overrides_all_three():
    g = build_ring(4)
    near = metropolis_hastings(g).w.copy()
    # move mass onto the (0, 2) chord in a cycle that keeps all sums exact
    eps = 1e-7
    near[0, 2] += eps
    near[0, 0] -= eps
    near[2, 0] += eps
    near[2, 2] -= eps
    assert validate(near, g).kind == "support"
    assert validate(near, g, atol=1e-6) is None


# --- spectral quantities ----------------------------------------------

def test_ring_deviation_matches_hand_value():
    # circulant eigenvalues (1 + 2cos(2 pi k / 6)) / 3; the largest
    # nontrivial one is 2/3
    w = metropolis_hastings(build_ring(6))
    assert abs(deviation_operator_norm(w) - 2 / 3) < 1e-9
    assert abs(consensus_factor(w) - 5 / 9) < 1e-9
    assert abs(spectral_gap(w) - 1 / 3) < 1e-9


def test_deviation_matches_dense_oracle():
    rng = np.random.default_rng(6)
    for _ in range(15):
        n = int(rng.integers(3, 10))
        graph = build_ring(n)
        w = project_feasible(rng.uniform(0, 1, (n, n)), graph)
        assert abs(deviation_operator_norm(w) - _dense_deviation(w)) < 1e-7


def test_identity_and_uniform_are_the_extremes():
    eye = MixingMatrix(np.eye(4))
    assert abs(deviation_operator_norm(eye) - 1.0) < 1e-10
    assert abs(consensus_factor(eye)) < 1e-9
    j = uniform_averaging(4)
    assert deviation_operator_norm(j) < 1e-9
    assert abs(consensus_factor(j) - 1.0) < 1e-9


def test_compose():
    g = build_ring(4)
    mh = metropolis_hastings(g)
    sq = compose(mh, mh)
    np.testing.assert_allclose(sq.w, mh.w @ mh.w, atol=1e-15)
    eye = MixingMatrix(np.eye(4))
    np.testing.assert_allclose(compose(eye, mh).w, mh.w, atol=1e-15)
    with pytest.raises(ValueError):
        compose(mh, MixingMatrix(np.eye(3)))


def test_optimal_weights_beat_metropolis_hastings():
    for graph in (_path3(), build_ring(8), build_complete(4)):
        w = optimal_spectral_gap_weights(graph, iters=200)
        assert validate(w.w, graph, 1e-8) is None
        assert np.allclose(w.w, w.w.T, atol=1e-9)
        assert _dense_deviation(w) <= _dense_deviation(metropolis_hastings(graph)) + 1e-6


def test_optimal_weights_reach_known_path_optimum():
    # the fastest-mixing chain on a 3-path has deviation exactly 1/2
    w = optimal_spectral_gap_weights(_path3())
    assert _dense_deviation(w) < 0.5 + 1e-4


# --- file round trip ---------------------------------------------------

def test_save_load_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(7)
    g = build_ring(5)
    for w in (metropolis_hastings(g), project_feasible(rng.uniform(0, 1, (5, 5)), g)):
        path = tmp_path / "w.txt"
        save_matrix(w, path)
        np.testing.assert_array_equal(load_matrix(path).w, w.w)


def test_load_matrix_rejects_malformed(tmp_path):
    path = tmp_path / "w.txt"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_matrix(path)
    path.write_text("2\n0.5 0.5\n")
    with pytest.raises(ValueError, match="rows"):
        load_matrix(path)
    path.write_text("2\n0.5 0.5\n0.5 0.5 0.5\n")
    with pytest.raises(ValueError, match="entries"):
        load_matrix(path)
