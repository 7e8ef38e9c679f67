import datetime as dt

import pytest

from nestkit.communities import EOParams
from nestkit.graph import BipartiteGraph, GraphError, largest_connected_component
from nestkit.peeringdb import Exchange, Network, PeeringSnapshot, SelectionConfig, load_snapshot
from nestkit.temporal import (SnapshotSeries, build_series, load_series, monthly_dumps, persistence,
                              persistent_universe, save_series, series_from_graphs)

D = [dt.date(2020, m, 1) for m in range(1, 13)]


def edges(*pairs):
    return BipartiteGraph.from_edges(list(pairs))


def test_identical_snapshots_keep_main_component():
    g = edges(("a", "x"), ("b", "x"), ("b", "y"), ("c", "z"))
    s = series_from_graphs(D[:2], [g, g], "test")
    lcc = largest_connected_component(g)
    assert s.graphs[0] == s.graphs[1] == lcc


def test_node_seen_in_two_of_three_snapshots_excluded():
    g1 = edges(("a", "x"), ("b", "x"), ("c", "x"))
    g2 = edges(("a", "x"), ("b", "x"))
    g3 = edges(("a", "x"), ("b", "x"), ("c", "x"))
    s = series_from_graphs(D[:3], [g1, g2, g3], "test")
    assert all(g.row_nodes == ("a", "b") for g in s.graphs)


def test_universe_iterates_until_connected_everywhere():
    # b links to x only in the first snapshot, so it falls off the main component in the second
    g1 = edges(("a", "x"), ("b", "x"), ("a", "y"))
    g2 = edges(("a", "x"), ("a", "y"), ("b", "z"))
    rows, cols = persistent_universe([g1, g2])
    assert rows == ["a"] and cols == ["x", "y"]


def test_empty_intersection():
    with pytest.raises(GraphError, match="empty"):
        series_from_graphs(D[:2], [edges(("a", "x")), edges(("b", "y"))], "test")


def test_series_invariants():
    g = edges(("a", "x"))
    h = edges(("a", "y"))
    with pytest.raises(ValueError, match="increasing"):
        SnapshotSeries((D[1], D[0]), (g, g), "test")
    with pytest.raises(ValueError, match="registries"):
        SnapshotSeries(D[:2], (g, h), "test")
    with pytest.raises(GraphError):
        series_from_graphs(D[:1], [g], "test")


def test_persistence_examples():
    g0 = edges(("a", "x"), ("b", "x"))
    g1 = BipartiteGraph(g0.row_nodes, g0.col_nodes, {("a", "x"): 1.0})
    s = SnapshotSeries(D[:2], (g0, g1), "test")
    assert persistence(s, 1) == 0.5
    same = SnapshotSeries(D[:4], (g0,) * 4, "test")
    assert all(persistence(same, lag) == 1.0 for lag in (1, 2, 3))
    with pytest.raises(ValueError):
        persistence(same, 4)
    with pytest.raises(ValueError):
        persistence(same, 0)


def test_save_load_roundtrip(tmp_path):
    g0 = edges(("a", "x"), ("b", "x"), ("b", "y"))
    g1 = BipartiteGraph(g0.row_nodes, g0.col_nodes, {("a", "x"): 1.0, ("b", "y"): 1.0})
    s = SnapshotSeries(D[:2], (g0, g1), "test", {"seed": 3})
    path = save_series(s, tmp_path / "series")
    assert sorted(p.name for p in path.parent.iterdir()) == ["2020-01-01.tsv", "2020-02-01.tsv", "manifest.json"]
    back = load_series(path)
    assert back == s


def test_monthly_dumps_takes_first_of_each_month(tmp_path):
    for name in ("peeringdb_2_dump_2020_01_15.json", "peeringdb_2_dump_2020_01_01.json",
                 "peeringdb_2_dump_2020_02_03.json", "peeringdb_2_dump_2020_04_01.json", "readme.txt"):
        (tmp_path / name).write_text("{}")
    picked = monthly_dumps(tmp_path, dt.date(2020, 1, 1), dt.date(2020, 3, 31))
    assert [(d, p.name) for d, p in picked] == [
        (dt.date(2020, 1, 1), "peeringdb_2_dump_2020_01_01.json"),
        (dt.date(2020, 2, 3), "peeringdb_2_dump_2020_02_03.json"),
    ]


def _snap(day, memberships):
    ases = {a for a, _ in memberships}
    ixs = {x for _, x in memberships}
    return PeeringSnapshot(day, {a: Network(a) for a in ases}, {x: Exchange(x, country=x[:2]) for x in ixs},
                           {k: 1.0 for k in memberships})


def test_build_series_rejects_bad_input():
    s = _snap(D[0], [("1", "DE1")])
    with pytest.raises(ValueError):
        build_series([s, s], "as_thing")
    with pytest.raises(GraphError):
        build_series([s], "as_country")
    with pytest.raises(GraphError, match="chronological"):
        build_series([_snap(D[1], [("1", "DE1")]), s], "as_country")


def test_as_country_selection_made_on_reference_snapshot():
    early = _snap(D[0], [("1", "DE1"), ("2", "DE1"), ("2", "FR1"), ("3", "FR1")])
    late = _snap(D[1], [("1", "DE1"), ("2", "DE1"), ("3", "FR1"), ("3", "NL1"), ("3", "DE1")])
    sel = SelectionConfig(top_k=1, metrics=("degree",))
    s = build_series([early, late], "as_country", sel)
    assert s.meta["reference_date"] == "2020-02-01"
    # AS3 tops the last snapshot; it exists in both, so it is the universe
    assert s.graphs[0].row_nodes == ("3",)
    assert s.restriction_id == "as_country_persistent"


def test_as_country_series_on_bundled_dumps(dumps_dir):
    snaps = [load_snapshot(p) for p in sorted(dumps_dir.glob("*.json"))]
    monthly = [snaps[0]] + snaps[2:]
    s = build_series(monthly, "as_country", SelectionConfig(top_k=20))
    assert len(s) == 5 and s.graphs[0].n_rows > 10
    g0 = s.graphs[0]
    assert all(g.row_nodes == g0.row_nodes and g.col_nodes == g0.col_nodes for g in s.graphs)


def test_as_ixp_series_on_bundled_dumps(dumps_dir):
    snaps = [load_snapshot(p) for p in sorted(dumps_dir.glob("*.json"))][2:5]
    a = build_series(snaps, "as_ixp", seed=1, restarts=2)
    b = build_series(snaps, "as_ixp", seed=1, restarts=2)
    assert a == b
    assert a.restriction_id == "as_ixp_nested_component"
    assert a.meta["community_rows"] == a.graphs[0].n_rows
    assert 0.0 <= persistence(a, 1) <= 1.0


def test_as_ixp_series_respects_eo_params(dumps_dir):
    snaps = [load_snapshot(p) for p in sorted(dumps_dir.glob("*.json"))][2:4]
    s = build_series(snaps, "as_ixp", restarts=1, eo_params=EOParams(stall_factor=2))
    assert s.meta["restarts"] == 1
