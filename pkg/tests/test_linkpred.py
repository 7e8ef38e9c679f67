import datetime as dt
import itertools

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from nestkit.graph import BipartiteGraph, GraphError
from nestkit.linkpred import (ETA_CLIP, ProbitError, ProbitFit, PredictionList, RocUndefinedError,
                              design_matrix, evaluate, event_labels, fit_probit, fitted_probabilities,
                              predict, probit_mle, residuals, roc_auc, roc_from_labels)
from nestkit.synthetic import noisy_nested, staircase
from nestkit.temporal import SnapshotSeries
from oracles import auc_ordered, auc_pairs, probit_loglik_direct

D = [dt.date(2020, m, 1) for m in range(1, 13)]


def g_of(m):
    return BipartiteGraph.from_matrix(m)


def _random_graph(seed, shape=(9, 8), p=0.45):
    a = (np.random.default_rng(seed).random(shape) < p).astype(int)
    a[np.arange(min(shape)), np.arange(min(shape))] = 1
    return a


# -- fitting ---------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("intercept", [False, True])
def test_fit_matches_statsmodels(seed, intercept):
    g = g_of(_random_graph(seed))
    fit = fit_probit(g, include_intercept=intercept)
    x, _ = design_matrix(g, intercept)
    y = g.biadjacency(dense=True).ravel()
    ref = sm.Probit(y, x).fit(disp=0, method="newton", tol=1e-12, maxiter=200)
    assert fit.converged
    assert fit.coefficients == pytest.approx(ref.params, rel=1e-6, abs=1e-8)
    assert fit.log_likelihood == pytest.approx(ref.llf, rel=1e-10)


def test_balanced_independent_response_gives_zero_coefficients():
    # every row and column has degree 2 of 4: features are constant, fill is 1/2
    a = np.array([[1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 1, 1], [1, 0, 0, 1]])
    g = g_of(a)
    fit = fit_probit(g)
    assert np.all(np.abs(fit.coefficients) <= 1e-4)
    assert fitted_probabilities(g, fit) == pytest.approx(np.full((4, 4), 0.5), abs=1e-4)
    # grid search around the fit finds nothing better
    x, _ = design_matrix(g)
    y = a.ravel()
    best = probit_loglik_direct(fit.coefficients, x, y)
    for step in itertools.product([-0.05, 0.0, 0.05], repeat=3):
        assert probit_loglik_direct(fit.coefficients + np.array(step), x, y) <= best + 1e-12


@given(st.integers(0, 10_000), st.booleans())
@settings(max_examples=30)
def test_loglik_matches_direct_evaluation(seed, intercept):
    g = g_of(_random_graph(seed, (6, 7), 0.5))
    fit = fit_probit(g, include_intercept=intercept)
    x, _ = design_matrix(g, intercept)
    direct = probit_loglik_direct(fit.coefficients, x, g.biadjacency(dense=True).ravel())
    assert fit.log_likelihood == pytest.approx(direct, abs=1e-10)


@given(st.integers(0, 10_000))
@settings(max_examples=30)
def test_accepted_steps_never_lower_likelihood(seed):
    g = g_of(_random_graph(seed, (7, 7), 0.5))
    fit = fit_probit(g)
    assert all(b >= a for a, b in zip(fit.history, fit.history[1:]))


def test_standardization_keeps_model():
    g = g_of(_random_graph(3))
    raw = fit_probit(g)
    std = fit_probit(g, standardize=True)
    assert std.coefficients == pytest.approx(raw.coefficients, rel=1e-6)
    assert fitted_probabilities(g, std) == pytest.approx(fitted_probabilities(g, raw), abs=1e-8)


@pytest.mark.parametrize("seed", range(6))
def test_fitted_surface_monotone_where_slope_is_non_negative(seed):
    # slope in d(row) at fixed d(col) is alpha + gamma * d(col)
    g = g_of(noisy_nested(10, 0.1, np.random.default_rng(seed)))
    fit = fit_probit(g)
    a, b, c = fit.coefficients
    p = fitted_probabilities(g, fit)
    dr = g.biadjacency(dense=True).sum(axis=1)
    dc = g.biadjacency(dense=True).sum(axis=0)
    order = np.argsort(dr, kind="stable")
    for j in range(g.n_cols):
        col = p[order, j]
        if a + c * dc[j] >= 0:
            assert np.all(np.diff(col) >= -1e-15)
        else:
            assert np.all(np.diff(col) <= 1e-15)


def test_staircase_fixture_slope_changes_sign():
    # a negative alpha with positive gamma: thin columns see probability fall with row degree
    fit = fit_probit(g_of(staircase(10)))
    a, _, c = fit.coefficients
    assert c > 0 and a < 0 and a + c * 1 < 0 < a + c * 10


def test_separation_is_flagged_and_clipped():
    g = g_of(staircase(2))
    fit = fit_probit(g)
    assert fit.separated and not fit.converged
    x, _ = design_matrix(g)
    assert np.abs(x @ fit.coefficients).max() == pytest.approx(ETA_CLIP)
    create, _ = residuals(g, fit)
    assert [c[:2] for c in create.candidates] == [("r1", "c1")]


def test_constant_response_errors():
    with pytest.raises(ProbitError):
        fit_probit(g_of(np.ones((3, 3))))
    with pytest.raises(ProbitError, match="constant"):
        probit_mle(np.ones((4, 1)), np.zeros(4))


def test_design_matrix_names_and_values():
    g = g_of([[1, 1], [1, 0]])
    x, names = design_matrix(g, include_intercept=True)
    assert names == ("intercept", "alpha", "beta", "gamma")
    assert x.tolist() == [[1, 2, 2, 4], [1, 2, 1, 2], [1, 1, 2, 2], [1, 1, 1, 1]]
    assert fit_probit(g_of(_random_graph(0))).to_dict()["coefficients"].keys() == {"alpha", "beta", "gamma"}


# -- residuals ---------------------------------------------------------------------

def _constant_fit(p):
    return ProbitFit(np.array([ndtri(p), 0.0, 0.0, 0.0]), ("intercept", "alpha", "beta", "gamma"), 0.0, True, 0)


def test_residual_signs_by_hand():
    g = g_of([[1, 0]])
    create, delete = residuals(g, _constant_fit(0.9))
    assert create.candidates == [("r0", "c1", pytest.approx(-0.9))]
    assert delete.candidates == [("r0", "c0", pytest.approx(0.1))]
    assert create.excluded == 1 and delete.excluded == 1


def test_residual_orders_and_ties():
    g = g_of([[1, 0, 0], [0, 0, 1]])
    create, delete = residuals(g, _constant_fit(0.5))
    assert [c[:2] for c in create.candidates] == [("r0", "c1"), ("r0", "c2"), ("r1", "c0"), ("r1", "c1")]
    assert [c[:2] for c in delete.candidates] == [("r0", "c0"), ("r1", "c2")]


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_lists_are_sorted(seed):
    g = g_of(_random_graph(seed, (6, 6), 0.5))
    create, delete = residuals(g, fit_probit(g))
    rc = [c[2] for c in create.candidates]
    rd = [c[2] for c in delete.candidates]
    assert rc == sorted(rc) and rd == sorted(rd, reverse=True)
    assert len(create) + len(delete) == g.n_rows * g.n_cols


@pytest.mark.parametrize("hole", [(1, 5), (3, 4), (4, 2), (6, 1)])
def test_hole_inside_triangle_is_top_creation_candidate(hole):
    a = staircase(12)
    a[hole] = 0
    g = g_of(a)
    create, _ = residuals(g, fit_probit(g))
    assert create.candidates[0][:2] == (f"r{hole[0]}", f"c{hole[1]}")


# -- ROC -------------------------------------------------------------------------

def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]).auc == 1.0
    assert roc_auc([0.9, 0.5, 0.4, 0.2], [1, 0, 1, 0]).auc == 0.75
    assert roc_from_labels([1, 0, 1, 0]).auc == 0.75


def test_roc_points_and_endpoints():
    r = roc_from_labels([1, 0, 1, 0])
    assert r.points == [(0, 0), (0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]
    assert r.n_positive == 2 and r.n_negative == 2


def test_roc_ties_give_diagonal_segment():
    r = roc_auc([1.0, 1.0, 0.0], [1, 0, 0])
    assert r.points == [(0, 0), (0.5, 1.0), (1.0, 1.0)]
    assert r.auc == 0.75


def test_roc_undefined():
    with pytest.raises(RocUndefinedError, match="ROC undefined"):
        roc_from_labels([1, 1])
    with pytest.raises(RocUndefinedError, match="ROC undefined"):
        roc_auc([0.2, 0.1], [0, 0])


labels_st = st.lists(st.integers(0, 1), min_size=2, max_size=60).filter(lambda v: 0 < sum(v) < len(v))


@given(labels_st)
def test_ordered_auc_matches_pair_count(labels):
    r = roc_from_labels(labels)
    assert r.auc == pytest.approx(auc_ordered(labels), abs=1e-12)
    assert r.points[0] == (0.0, 0.0) and r.points[-1] == (1.0, 1.0)
    xs, ys = zip(*r.points)
    assert list(xs) == sorted(xs) and list(ys) == sorted(ys)


@given(labels_st)
def test_reversal_gives_complement(labels):
    assert roc_from_labels(labels[::-1]).auc == pytest.approx(1 - roc_from_labels(labels).auc, abs=1e-9)


@given(labels_st, st.integers(0, 10_000))
def test_score_auc_matches_pairs_and_monotone_transform(labels, seed):
    scores = np.random.default_rng(seed).integers(0, 6, len(labels)).astype(float)
    r = roc_auc(scores, labels)
    assert r.auc == pytest.approx(auc_pairs(scores, labels), abs=1e-12)
    assert roc_auc(np.exp(scores) * 3 - 7, labels).auc == pytest.approx(r.auc, abs=1e-12)


# -- evaluation against a series ---------------------------------------------------

def _series(mats):
    gs = [BipartiteGraph.from_matrix(m) for m in mats]
    return SnapshotSeries(D[:len(gs)], gs, "test")


def test_event_labels_any_later_snapshot_and_persist():
    s = _series([[[1, 0, 0]], [[1, 1, 0]], [[1, 0, 1]], [[1, 0, 1]]])
    preds = PredictionList("creation", [("r0", "c1", -0.5), ("r0", "c2", -0.1)])
    assert event_labels(s, preds) == [1, 1]
    assert event_labels(s, preds, persist=2) == [0, 1]
    with pytest.raises(ValueError):
        event_labels(s, preds, persist=0)


def test_deletion_labels():
    s = _series([[[1, 1, 0]], [[1, 0, 0]], [[1, 1, 0]]])
    preds = PredictionList("deletion", [("r0", "c1", 0.5), ("r0", "c0", 0.1)])
    assert event_labels(s, preds) == [1, 0]
    assert evaluate(s, preds).auc == 1.0


def test_evaluate_needs_later_snapshots():
    s = SnapshotSeries(D[:1], [g_of([[1, 0]])], "test")
    with pytest.raises(GraphError):
        evaluate(s, PredictionList("creation", [("r0", "c1", 0.0)]))


def test_predict_pipeline_on_filling_holes():
    a = staircase(10)
    holes = [(1, 4), (2, 2), (4, 1)]
    first = a.copy()
    for h in holes:
        first[h] = 0
    middle = first.copy()
    middle[9, 9] = 1  # an implausible link that comes and goes
    s = _series([first, middle, a])
    fit, preds, roc = predict(s, "creation")
    top = {c[:2] for c in preds.candidates[:5]}
    assert {(f"r{i}", f"c{j}") for i, j in holes} <= top
    assert roc.n_positive == 4 and roc.auc > 0.9
    assert fit.names == ("alpha", "beta", "gamma")


def test_predict_deletion_direction():
    a = staircase(10)
    later = a.copy()
    later[9, 0] = later[0, 9] = 0  # the thinnest links vanish
    _, preds, roc = predict(_series([a, later]), "delete")
    assert preds.direction == "deletion"
    assert roc.n_positive == 2 and roc.auc == 1.0
