import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import binary_matrices
from nestkit.graph import BipartiteGraph, GraphError
from nestkit.metrics import eta_tilde_matrix, nodf_matrix, spectral_radius, spectral_radius_matrix
from nestkit.nullmodels import (MAX_RETRIES, NullModelError, ensemble, generate_pp, pp_probabilities,
                                resolve_model, sample_pp, shuffle_weights, significance,
                                significance_from_values)


def g_of(m):
    return BipartiteGraph.from_matrix(m)


def test_complete_bipartite_is_fixed_point():
    g = g_of(np.ones((3, 4)))
    for variant in ("bascompte", "corrected"):
        assert generate_pp(g, variant, seed=11) == g


def test_pp_probability_hand_value():
    p = pp_probabilities(np.array([[1, 1], [1, 0]]))
    assert p[0, 0] == 1.0
    assert p[1, 1] == pytest.approx(0.5 * (1 / 2 + 1 / 2))


def test_generate_pp_keeps_registries():
    g = BipartiteGraph.from_edges([("a", "x"), ("a", "y"), ("b", "x")])
    r = generate_pp(g, seed=3)
    assert r.row_nodes == g.row_nodes and r.col_nodes == g.col_nodes


def test_generate_pp_rejects_empty_and_unknown_variant():
    with pytest.raises(GraphError):
        generate_pp(BipartiteGraph(("a",), ("x",), {}))
    with pytest.raises(ValueError):
        generate_pp(g_of([[1]]), variant="swap")


def test_corrected_retry_cap_names_class():
    p = np.array([[0.0, 0.0], [1.0, 1.0]])
    with pytest.raises(NullModelError, match="empty row"):
        sample_pp(p, np.random.default_rng(0), corrected=True)
    with pytest.raises(NullModelError, match="empty column"):
        sample_pp(p.T.copy(), np.random.default_rng(0), corrected=True)


def test_corrected_regenerates_degenerate_draws():
    # low probabilities: most raw draws have an empty row or column
    p = np.full((4, 4), 0.3)
    rng = np.random.default_rng(5)
    raw_empty = sum(not (m.any(axis=0).all() and m.any(axis=1).all())
                    for m in (sample_pp(p, rng) for _ in range(200)))
    assert raw_empty > 20
    for _ in range(200):
        m = sample_pp(p, rng, corrected=True)
        assert m.any(axis=0).all() and m.any(axis=1).all()


def test_retry_cap_constant():
    assert MAX_RETRIES == 1000


def test_shuffle_single_edge_identity():
    g = BipartiteGraph.from_edges([("a", "x", 5.0)])
    with pytest.raises(NullModelError, match="nothing to shuffle"):
        shuffle_weights(g.unweighted())
    g2 = BipartiteGraph.from_edges([("a", "x", 5.0), ("b", "x", 1.0)])
    assert sorted(shuffle_weights(g2, seed=1).edges.values()) == [1.0, 5.0]


def test_shuffle_preserves_weight_multiset_and_topology():
    g = BipartiteGraph.from_edges([("a", "x", 1.0), ("a", "y", 2.0), ("b", "y", 3.0)])
    s = shuffle_weights(g, seed=4)
    assert set(s.edges) == set(g.edges)
    assert sorted(s.edges.values()) == [1.0, 2.0, 3.0]


def test_shuffle_seed_determinism():
    w = np.arange(1.0, 21.0)
    g = BipartiteGraph.from_edges([(f"r{i}", f"c{i % 3}", float(v)) for i, v in enumerate(w)])
    assert shuffle_weights(g, 1).edges == shuffle_weights(g, 1).edges
    assert shuffle_weights(g, 1).edges != shuffle_weights(g, 2).edges


def test_shuffle_requires_weights():
    with pytest.raises(NullModelError, match="nothing to shuffle"):
        shuffle_weights(g_of([[1, 1], [1, 0]]))


@given(st.integers(0, 1000))
def test_shuffle_keeps_unweighted_spectral_radius(seed):
    rng = np.random.default_rng(seed)
    m = (rng.random((5, 6)) < 0.5) * rng.integers(1, 9, size=(5, 6))
    if not m.any():
        return
    g = g_of(m)
    s = shuffle_weights(g, seed)
    assert spectral_radius(s, weighted=False).value == spectral_radius(g, weighted=False).value


def test_resolve_model_aliases():
    assert resolve_model("pp") == "pp_bascompte"
    assert resolve_model("ppc") == "pp_corrected"
    assert resolve_model("shuffle") == "weight_shuffle"
    with pytest.raises(ValueError):
        resolve_model("curveball")


# -- significance protocol -------------------------------------------------------

def test_p_value_floor():
    r = significance_from_values(10.0, np.linspace(0, 1, 1000))
    assert r.p_value == 1 / 1000


def test_ties_count_toward_p():
    r = significance_from_values(1.0, [0.0] * 98 + [1.0, 2.0])
    assert r.p_value == 2 / 100


def test_observed_equal_mean_gives_zero_z():
    vals = np.array([1.0, 2.0, 3.0] * 40)
    assert significance_from_values(2.0, vals).z_score == 0.0


def test_z_uses_sample_std():
    vals = np.arange(100.0)
    r = significance_from_values(60.0, vals)
    assert r.z_score == pytest.approx((60.0 - vals.mean()) / vals.std(ddof=1))


def test_zero_std_sentinels():
    up = significance_from_values(2.0, [1.0] * 100)
    assert up.z_score == math.inf and up.degenerate
    assert up.to_dict()["z_score"] == "+inf"
    down = significance_from_values(0.0, [1.0] * 100)
    assert down.to_dict()["z_score"] == "-inf"
    flat = significance_from_values(1.0, [1.0] * 100)
    assert flat.z_score == 0.0 and flat.degenerate


def test_minimum_ensemble_size():
    with pytest.raises(ValueError):
        significance(g_of([[1, 1], [1, 0]]), "nodf", "pp", size=50)


def test_ensemble_member_k_is_a_seed_plus_k_graph():
    # the fast ensemble route and the graph-level generator must agree
    g = g_of((np.random.default_rng(2).random((6, 7)) < 0.5).astype(int) | np.eye(6, 7, dtype=int))
    ens = ensemble(g, "eta", "ppc", size=12, seed=40)
    for k, v in enumerate(ens.values):
        m = generate_pp(g, "corrected", seed=40 + k).biadjacency(dense=True)
        assert v == eta_tilde_matrix(m)[0]


def test_shuffle_ensemble_matches_graph_route():
    rng = np.random.default_rng(8)
    g = g_of((rng.random((5, 5)) < 0.6) * rng.integers(1, 50, size=(5, 5)) + np.eye(5))
    ens = ensemble(g, "rho", "shuffle", size=10, seed=3)
    for k, v in enumerate(ens.values):
        assert v == pytest.approx(spectral_radius(shuffle_weights(g, 3 + k), weighted=True).value, rel=1e-12)


def test_significance_bit_reproducible_and_thread_independent():
    g = g_of((np.random.default_rng(1).random((8, 8)) < 0.5).astype(int) | np.eye(8, dtype=int))
    a = significance(g, "nodf", "pp", size=150, seed=9)
    b = significance(g, "nodf", "pp", size=150, seed=9)
    c = significance(g, "nodf", "pp", size=150, seed=9, threads=4)
    assert a == b == c


def test_nested_fixture_is_significant_small():
    a = np.triu(np.ones((10, 10)))[:, ::-1]
    r = significance(g_of(a), "nodf", "pp", size=200, seed=0)
    assert r.p_value == 1 / 200
    assert r.z_score > 3


@given(binary_matrices(min_side=2, max_side=5), st.integers(0, 10_000))
def test_corrected_samples_never_degenerate(a, seed):
    p = pp_probabilities(a.astype(float))
    m = sample_pp(p, np.random.default_rng(seed), corrected=True)
    assert m.any(axis=0).all() and m.any(axis=1).all()


def test_expected_degrees_match_cell_probabilities():
    rng = np.random.default_rng(12)
    a = (rng.random((6, 9)) < 0.4).astype(float)
    a[:, 0] = 1
    p = pp_probabilities(a)
    samples = np.stack([sample_pp(p, np.random.default_rng(s)) for s in range(1000)])
    deg = samples.sum(axis=2)
    se = deg.std(axis=0, ddof=1) / math.sqrt(1000)
    assert np.all(np.abs(deg.mean(axis=0) - p.sum(axis=1)) <= 3 * se)


def test_nodf_metric_unchanged_by_weights():
    m = np.array([[3.0, 1.0], [2.0, 0.0]])
    assert nodf_matrix(m) == nodf_matrix((m > 0).astype(float))
    assert spectral_radius_matrix(m) != spectral_radius_matrix((m > 0).astype(float))
