import csv

import numpy as np

from nestkit.graph import BipartiteGraph
from nestkit.linkpred import roc_from_labels
from nestkit.plots import plot_ordered_matrix, plot_roc
from nestkit.ranking import degree_ranking, ordered_matrix
from nestkit.synthetic import staircase


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_ordered_matrix_plot_and_twins(tmp_path):
    g = BipartiteGraph.from_matrix(staircase(4))
    ex = ordered_matrix(g, *degree_ranking(g))
    svg, cells, curves = plot_ordered_matrix(ex, tmp_path / "m.svg", "staircase")
    assert svg.read_text().lstrip().startswith("<?xml")
    assert len(_rows(cells)) == 1 + 10
    rows = _rows(curves)
    assert rows[0] == ["class", "position", "node", "degree"]
    assert rows[1] == ["row", "0", "r0", "4"]


def test_plots_are_byte_identical_across_runs(tmp_path):
    roc = roc_from_labels([1, 0, 1, 1, 0])
    a, ta = plot_roc(roc, tmp_path / "a.svg")
    b, tb = plot_roc(roc, tmp_path / "b.svg")
    assert a.read_bytes() == b.read_bytes()
    assert ta.read_bytes() == tb.read_bytes()
    g = BipartiteGraph.from_matrix((np.random.default_rng(0).random((6, 5)) < 0.5) | np.eye(6, 5, dtype=bool))
    ex = ordered_matrix(g, *degree_ranking(g))
    x = plot_ordered_matrix(ex, tmp_path / "x.svg")[0].read_bytes()
    y = plot_ordered_matrix(ex, tmp_path / "y.svg")[0].read_bytes()
    assert x == y


def test_roc_twin_holds_points(tmp_path):
    roc = roc_from_labels([1, 0])
    _, twin = plot_roc(roc, tmp_path / "r.svg")
    assert _rows(twin) == [["step", "fpr", "tpr"], ["0", "0.0", "0.0"], ["1", "0.0", "1.0"], ["2", "1.0", "1.0"]]
