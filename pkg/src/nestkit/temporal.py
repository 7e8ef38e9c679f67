"""Monthly snapshot series over a persistent node universe."""

from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .communities import EOParams, optimize
from .graph import (BipartiteGraph, GraphError, degree_filter, largest_connected_component,
                    read_edgelist, write_edgelist)
from .peeringdb import (PeeringSnapshot, SelectionConfig, build_as_country, build_as_ixp,
                        date_from_name, select_central)

log = logging.getLogger(__name__)

RESTRICTIONS = {"as_country": "as_country_persistent", "as_ixp": "as_ixp_nested_component"}


@dataclass(frozen=True)
class SnapshotSeries:
    """Dated graphs sharing identical row and column registries."""

    dates: tuple[dt.date, ...]
    graphs: tuple[BipartiteGraph, ...]
    restriction_id: str
    meta: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "graphs", tuple(self.graphs))
        if len(self.dates) != len(self.graphs):
            raise ValueError("dates and graphs differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if self.graphs:
            g0 = self.graphs[0]
            for g in self.graphs[1:]:
                if g.row_nodes != g0.row_nodes or g.col_nodes != g0.col_nodes:
                    raise ValueError("series graphs must share node registries")

    def __len__(self):
        return len(self.graphs)


def _restrict(g: BipartiteGraph, rows: Sequence[str], cols: Sequence[str]) -> BipartiteGraph:
    rs, cs = set(rows), set(cols)
    edges = {k: w for k, w in g.edges.items() if k[0] in rs and k[1] in cs}
    return BipartiteGraph(tuple(rows), tuple(cols), edges, g.row_labels, g.col_labels)


def persistent_universe(graphs: Sequence[BipartiteGraph]) -> tuple[list[str], list[str]]:
    """Nodes present, and in the main component, in every graph.

    Intersects the node sets, then repeatedly drops nodes that fall outside
    the largest component of any snapshot's induced subgraph until nothing
    changes.  Order follows the first graph's registries.
    """
    rows = set(graphs[0].row_nodes)
    cols = set(graphs[0].col_nodes)
    for g in graphs[1:]:
        rows &= set(g.row_nodes)
        cols &= set(g.col_nodes)
    while True:
        if not rows or not cols:
            raise GraphError("empty node intersection across snapshots")
        new_rows, new_cols = set(rows), set(cols)
        for g in graphs:
            sub = largest_connected_component(g.subgraph(rows, cols))
            new_rows &= set(sub.row_nodes)
            new_cols &= set(sub.col_nodes)
        if new_rows == rows and new_cols == cols:
            break
        rows, cols = new_rows, new_cols
    g0 = graphs[0]
    return [n for n in g0.row_nodes if n in rows], [n for n in g0.col_nodes if n in cols]


def series_from_graphs(dates, graphs, restriction_id: str, meta=None) -> SnapshotSeries:
    if len(graphs) < 2:
        raise GraphError("a series needs at least two snapshots")
    rows, cols = persistent_universe(graphs)
    return SnapshotSeries(tuple(dates), tuple(_restrict(g, rows, cols) for g in graphs),
                          restriction_id, meta or {})


def build_series(snapshots: Sequence[PeeringSnapshot], kind: str, sel: SelectionConfig | None = None,
                 seed: int = 0, min_row_degree: int = 4, restarts: int = 20,
                 reference: int = -1, eo_params: EOParams | None = None) -> SnapshotSeries:
    """Series of AS-country or AS-IXP graphs restricted to persistent nodes.

    AS-country: the central-AS selection is made once, on
    ``snapshots[reference]`` (the last one by default), and every snapshot
    is built over that AS set.  AS-IXP: each snapshot is degree-filtered,
    then the series is cut down to the largest (by AS count) in-block
    nestedness community found on the first snapshot.
    """
    if kind not in RESTRICTIONS:
        raise ValueError(f"unknown series kind {kind!r}")
    if len(snapshots) < 2:
        raise GraphError("a series needs at least two snapshots")
    dates = [s.date for s in snapshots]
    if any(d is None for d in dates):
        raise GraphError("every snapshot needs a date")
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise GraphError("snapshots must be in chronological order")
    sel = sel or SelectionConfig()
    meta = {"kind": kind, "seed": seed}
    if kind == "as_country":
        ref = snapshots[reference]
        picked = select_central(ref, sel)
        ases = sorted(set().union(*picked.values()))
        meta.update(reference_date=ref.date.isoformat(), selected_ases=len(ases))
        graphs = [build_as_country(s, sel, ases=ases) for s in snapshots]
        return series_from_graphs(dates, [g.unweighted() for g in graphs], RESTRICTIONS[kind], meta)

    graphs = [degree_filter(build_as_ixp(s), min_row_degree).unweighted() for s in snapshots]
    rows, cols = persistent_universe(graphs)
    first = _restrict(graphs[0], rows, cols)
    part = optimize(first, "ibn", seed=seed, params=eo_params, restarts=restarts)
    sizes: dict[int, int] = {}
    for lab in part.row_labels.values():
        sizes[lab] = sizes.get(lab, 0) + 1
    main = min(sizes, key=lambda lab: (-sizes[lab], lab))
    members = part.members(main)
    meta.update(min_row_degree=min_row_degree, restarts=restarts, community=main,
                community_rows=len(members[0]), community_cols=len(members[1]),
                ibn=part.objective_value)
    graphs = [_restrict(g, members[0], members[1]) for g in graphs]
    return series_from_graphs(dates, graphs, RESTRICTIONS[kind], meta)


def persistence(series: SnapshotSeries, lag_months: int) -> float:
    """Mean fraction of a snapshot's links still present ``lag_months`` later."""
    if lag_months < 1 or lag_months >= len(series):
        raise ValueError(f"lag {lag_months} out of range for a series of {len(series)} snapshots")
    fractions = []
    for t in range(len(series) - lag_months):
        e0 = set(series.graphs[t].edges)
        e1 = set(series.graphs[t + lag_months].edges)
        if e0:
            fractions.append(len(e0 & e1) / len(e0))
    return sum(fractions) / len(fractions)


def monthly_dumps(directory, start: dt.date, end: dt.date) -> list[tuple[dt.date, Path]]:
    """First dated dump of each calendar month within ``[start, end]``."""
    by_month: dict[tuple[int, int], tuple[dt.date, Path]] = {}
    for path in sorted(Path(directory).iterdir()):
        day = date_from_name(path.name)
        if day is None or not (start <= day <= end):
            continue
        key = (day.year, day.month)
        if key not in by_month or day < by_month[key][0]:
            by_month[key] = (day, path)
    return [by_month[k] for k in sorted(by_month)]


def save_series(series: SnapshotSeries, outdir) -> Path:
    """One edge list per date plus ``manifest.json`` holding the registries."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    files = []
    for day, g in zip(series.dates, series.graphs):
        name = f"{day.isoformat()}.tsv"
        write_edgelist(g, outdir / name)
        files.append(name)
    g0 = series.graphs[0]
    manifest = {
        "tool": "nestkit",
        "version": __version__,
        "restriction": series.restriction_id,
        "dates": [d.isoformat() for d in series.dates],
        "files": files,
        "rows": list(g0.row_nodes),
        "cols": list(g0.col_nodes),
        "edges": [g.n_edges for g in series.graphs],
        "meta": series.meta or {},
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_series(manifest_path) -> SnapshotSeries:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    rows, cols = manifest["rows"], manifest["cols"]
    graphs = []
    for name in manifest["files"]:
        g = read_edgelist(manifest_path.parent / name)
        graphs.append(BipartiteGraph(tuple(rows), tuple(cols), dict(g.edges)))
    dates = tuple(dt.date.fromisoformat(d) for d in manifest["dates"])
    return SnapshotSeries(dates, tuple(graphs), manifest["restriction"], manifest.get("meta", {}))
