"""``nestkit`` command line: ingest, build, test, partition, rank and predict.

Every run writes its artifacts plus ``manifest.json`` (inputs with their
hashes, the effective config, seed and tool version) into ``--out``.
Effective settings come from flags, then ``--config`` (JSON), then the
built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__
from .communities import EOParams, composition_csv_rows, composition_report, optimize
from .graph import (GraphError, degree_filter, diagnostics, largest_connected_component, read_edgelist,
                    write_edgelist)
from .linkpred import predict, roc_auc
from .metrics import METRICS, eta_tilde, resolve_metric
from .nullmodels import significance
from .peeringdb import SELECTION_METRICS, SelectionConfig, build_as_country, build_as_ixp, date_from_name, \
    load_snapshot, provenance
from .plots import plot_ordered_matrix, plot_roc, write_csv
from .ranking import compare_rankings, ordered_matrix, rankings
from .temporal import build_series, load_series, monthly_dumps, save_series

log = logging.getLogger("nestkit")

DUMPS_ENV = "NESTKIT_DUMPS"

GLOBAL_DEFAULTS = {"seed": 0, "out": "nestkit-out", "log_level": "WARNING", "threads": 1, "config": None}

COMMAND_DEFAULTS = {
    "ingest": {"dump": None, "dir": None, "date": None, "kind": "as_ixp", "min_row_degree": 0,
               "top_k": 100, "selection": ",".join(SELECTION_METRICS), "unweighted": False},
    "graph": {"input": None, "lcc": False, "min_row_degree": 0, "unweighted": False},
    "metric": {"input": None, "metric": "nodf", "weighted": False, "expectation": "printed"},
    "test": {"input": None, "metric": "eta", "null": "pp", "n": 1000, "weighted": None},
    "communities": {"input": None, "objective": "ibn", "restarts": 1, "snapshot": None,
                    "stall_factor": 10.0, "top": 5},
    "rank": {"input": None, "metric": "fitness", "variant": "original", "compare": None},
    "plot-matrix": {"input": None, "order_by": "fitness", "variant": "original", "title": ""},
    "series": {"start": None, "end": None, "kind": "as_country", "dir": None, "top_k": 100,
               "min_row_degree": 4, "restarts": 20},
    "predict": {"series": None, "direction": "create", "persist": 1, "intercept": False,
                "standardize": False},
    "roc": {"input": None},
}

REQUIRED = {
    "graph": ["input"], "metric": ["input"], "test": ["input"], "communities": ["input"],
    "rank": ["input"], "plot-matrix": ["input"], "series": ["start", "end"],
    "predict": ["series"], "roc": ["input"],
}


class UsageError(Exception):
    pass


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _add_globals(p: argparse.ArgumentParser) -> None:
    sup = argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=sup, help="base random seed (default 0)")
    p.add_argument("--out", default=sup, help="output directory (default ./nestkit-out)")
    p.add_argument("--log-level", default=sup, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--threads", type=int, default=sup, help="worker threads for null ensembles")
    p.add_argument("--config", default=sup, help="JSON file of default settings")


def build_parser() -> argparse.ArgumentParser:
    sup = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="nestkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nestkit {__version__}")
    _add_globals(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def cmd(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=sup)
        _add_globals(p)
        return p

    p = cmd("ingest", "parse one PeeringDB dump into an edge list with provenance")
    p.add_argument("--dump", help="dump file (JSON, optionally gzip/bz2)")
    p.add_argument("--dir", help=f"dump directory (default ${DUMPS_ENV})")
    p.add_argument("--date", type=_date, help="pick the dump of this date from --dir")
    p.add_argument("--kind", choices=["as_ixp", "as_country"])
    p.add_argument("--min-row-degree", type=int, help="drop ASes below this degree, then keep the main component")
    p.add_argument("--top-k", type=int, help="ASes kept per centrality metric (as_country)")
    p.add_argument("--selection", help="comma-separated centrality metrics (as_country)")
    p.add_argument("--unweighted", action="store_true")

    p = cmd("graph", "condition an edge list and report diagnostics")
    p.add_argument("--input", help="edge list")
    p.add_argument("--lcc", action="store_true", help="keep the largest connected component")
    p.add_argument("--min-row-degree", type=int)
    p.add_argument("--unweighted", action="store_true")

    p = cmd("metric", "nestedness of an edge list")
    p.add_argument("--input")
    p.add_argument("--metric", help="nodf | eta | rho")
    p.add_argument("--weighted", action="store_true", help="spectral radius on weights")
    p.add_argument("--expectation", choices=["printed", "linear"])

    p = cmd("test", "significance against a null ensemble")
    p.add_argument("--input")
    p.add_argument("--metric")
    p.add_argument("--null", help="pp | ppc | shuffle")
    p.add_argument("--n", type=int, help="ensemble size")
    p.add_argument("--weighted", action=argparse.BooleanOptionalAction)

    p = cmd("communities", "extremal-optimization partition")
    p.add_argument("--input")
    p.add_argument("--objective", help="ibn | modularity")
    p.add_argument("--restarts", type=int)
    p.add_argument("--snapshot", help="dump used for the composition report")
    p.add_argument("--stall-factor", type=float)
    p.add_argument("--top", type=int, help="countries listed per community")

    p = cmd("rank", "node rankings")
    p.add_argument("--input")
    p.add_argument("--metric", choices=["fitness", "degree", "betweenness"])
    p.add_argument("--variant", choices=["original", "modified"], help="fitness-complexity update")
    p.add_argument("--compare", choices=["fitness", "degree", "betweenness"], help="baseline ranking")

    p = cmd("plot-matrix", "ordered bi-adjacency matrix as SVG plus CSV")
    p.add_argument("--input")
    p.add_argument("--order-by", choices=["fitness", "degree", "betweenness"])
    p.add_argument("--variant", choices=["original", "modified"])
    p.add_argument("--title")

    p = cmd("series", "monthly snapshot series over persistent nodes")
    p.add_argument("--from", dest="start", type=_date)
    p.add_argument("--to", dest="end", type=_date)
    p.add_argument("--kind", choices=["as_country", "as_ixp"])
    p.add_argument("--dir", help=f"dump directory (default ${DUMPS_ENV})")
    p.add_argument("--top-k", type=int)
    p.add_argument("--min-row-degree", type=int)
    p.add_argument("--restarts", type=int)

    p = cmd("predict", "probit-residual link prediction on a series")
    p.add_argument("--series", help="series manifest.json")
    p.add_argument("--direction", choices=["create", "delete"])
    p.add_argument("--persist", type=int, help="consecutive snapshots an event must last")
    p.add_argument("--intercept", action="store_true")
    p.add_argument("--standardize", action="store_true")

    p = cmd("roc", "ROC curve of scored labels")
    p.add_argument("--input", help="CSV with score and label columns")
    return parser


def effective_config(command: str, given: dict) -> dict:
    """Merge defaults, the JSON config file and explicit flags (highest)."""
    cfg = dict(GLOBAL_DEFAULTS)
    cfg.update(COMMAND_DEFAULTS[command])
    path = given.get("config")
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        section = data.get(command, {})
        flat = {k: v for k, v in data.items() if k in cfg and not isinstance(v, dict)}
        for src in (flat, section):
            for k, v in src.items():
                key = k.replace("-", "_")
                if key not in cfg:
                    raise UsageError(f"unknown config key {k!r} for {command}")
                cfg[key] = v
    cfg.update(given)
    for key in ("start", "end", "date"):
        if isinstance(cfg.get(key), str):
            cfg[key] = dt.date.fromisoformat(cfg[key])
    for key in REQUIRED.get(command, []):
        if cfg.get(key) in (None, ""):
            raise UsageError(f"{command}: --{key.replace('_', '-')} is required")
    return cfg


def _jsonable(cfg: dict) -> dict:
    return {k: (v.isoformat() if isinstance(v, dt.date) else v) for k, v in sorted(cfg.items())}


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_finite) + "\n", encoding="utf-8")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects inputs and outputs for the manifest."""

    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, dict] = {}
        self.outputs: list[str] = []

    def input(self, name: str, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"{name} not found: {path}")
        if path.is_file():
            self.inputs[name] = {"path": str(path), "sha256": _sha256(path)}
        else:
            self.inputs[name] = {"path": str(path)}
        return path

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def json(self, name: str, obj) -> None:
        write_json(self.path(name), obj)

    def csv(self, name: str, rows) -> None:
        write_csv(self.path(name), rows)

    def manifest(self) -> dict:
        m = {
            "tool": "nestkit",
            "version": __version__,
            "command": self.command,
            "seed": self.cfg["seed"],
            "config": _jsonable(self.cfg),
            "inputs": self.inputs,
            "outputs": sorted(set(self.outputs)),
        }
        write_json(self.out / "manifest.json", m)
        return m


def _dump_dir(cfg) -> Path:
    d = cfg.get("dir") or os.environ.get(DUMPS_ENV)
    if not d:
        raise UsageError(f"no dump directory: pass --dir or set {DUMPS_ENV}")
    return Path(d)


def _selection(cfg) -> SelectionConfig:
    metrics = tuple(m.strip() for m in str(cfg["selection"]).split(",") if m.strip())
    return SelectionConfig(top_k=int(cfg["top_k"]), metrics=metrics)


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(run: Run, cfg) -> dict:
    if cfg["dump"]:
        path = run.input("dump", cfg["dump"])
    else:
        if cfg["date"] is None:
            raise UsageError("ingest: give --dump, or --dir/--date")
        d = _dump_dir(cfg)
        matches = sorted(p for p in d.iterdir() if date_from_name(p.name) == cfg["date"])
        if not matches:
            raise FileNotFoundError(f"no dump dated {cfg['date']} in {d}")
        path = run.input("dump", matches[0])
    snap = load_snapshot(path)
    stats: dict = {}
    if cfg["kind"] == "as_ixp":
        g = build_as_ixp(snap, stats=stats)
    else:
        g = build_as_country(snap, _selection(cfg), stats=stats)
    stats.update(component_rows=g.n_rows, component_cols=g.n_cols, component_edges=g.n_edges)
    if cfg["min_row_degree"] > 0:
        g = degree_filter(g, cfg["min_row_degree"])
        stats.update(min_row_degree=cfg["min_row_degree"], filtered_rows=g.n_rows,
                     filtered_cols=g.n_cols, filtered_edges=g.n_edges)
    if cfg["unweighted"]:
        g = g.unweighted()
    write_edgelist(g, run.path("graph.tsv"))
    prov = provenance(snap, g, cfg["kind"], stats)
    run.json("provenance.json", prov)
    run.json("diagnostics.json", diagnostics(g).to_dict())
    return prov


def cmd_graph(run: Run, cfg) -> dict:
    g = read_edgelist(run.input("input", cfg["input"]))
    if cfg["lcc"]:
        g = largest_connected_component(g)
    if cfg["min_row_degree"] > 0:
        g = degree_filter(g, cfg["min_row_degree"])
    if cfg["unweighted"]:
        g = g.unweighted()
    write_edgelist(g, run.path("graph.tsv"))
    diag = diagnostics(g).to_dict()
    run.json("diagnostics.json", diag)
    return diag


def cmd_metric(run: Run, cfg) -> dict:
    g = read_edgelist(run.input("input", cfg["input"]))
    metric = resolve_metric(cfg["metric"])
    if metric == "eta_tilde":
        value = eta_tilde(g, cfg["expectation"])
    else:
        value = METRICS[metric](g, weighted=bool(cfg["weighted"]))
    out = value.to_dict()
    run.json("metric.json", out)
    return out


def cmd_test(run: Run, cfg) -> dict:
    g = read_edgelist(run.input("input", cfg["input"]))
    res = significance(g, cfg["metric"], cfg["null"], size=int(cfg["n"]), seed=int(cfg["seed"]),
                       weighted=cfg["weighted"], threads=int(cfg["threads"]))
    out = res.to_dict()
    run.json("significance.json", out)
    return out


def cmd_communities(run: Run, cfg) -> dict:
    g = read_edgelist(run.input("input", cfg["input"])).unweighted()
    params = EOParams(stall_factor=float(cfg["stall_factor"]))
    part = optimize(g, cfg["objective"], seed=int(cfg["seed"]), params=params, restarts=int(cfg["restarts"]))
    out = part.to_dict()
    run.json("partition.json", out)
    rows = [["class", "node", "community"]]
    rows += [["row", n, part.row_labels[n]] for n in g.row_nodes]
    rows += [["col", n, part.col_labels[n]] for n in g.col_nodes]
    run.csv("membership.csv", rows)
    if cfg["snapshot"]:
        snap = load_snapshot(run.input("snapshot", cfg["snapshot"]))
        report = composition_report(g, part, snap, top=int(cfg["top"]))
        run.csv("composition.csv", composition_csv_rows(report))
    return {k: out[k] for k in ("objective", "objective_value", "seed", "n_communities")}


def _ranking_rows(r) -> list[list]:
    return [["node", "score", "rank"]] + [[n, repr(float(s)), k] for n, s, k in r.to_rows()]


def _rankings(g, metric, variant):
    return rankings(g, metric, variant=variant) if metric == "fitness" else rankings(g, metric)


def cmd_rank(run: Run, cfg) -> dict:
    g = read_edgelist(run.input("input", cfg["input"])).unweighted()
    rows, cols = _rankings(g, cfg["metric"], cfg["variant"])
    run.csv("ranking_rows.csv", _ranking_rows(rows))
    run.csv("ranking_cols.csv", _ranking_rows(cols))
    out = {"metric": cfg["metric"], "rows": len(rows.order), "cols": len(cols.order),
           "info": {k: v for k, v in rows.info.items() if k != "col_scores"}}
    if cfg["compare"]:
        base_rows, _ = _rankings(g, cfg["compare"], cfg["variant"])
        table = compare_rankings(rows, base_rows)
        run.csv("comparison_rows.csv", [["node", "rank", "baseline_rank", "delta", "singular"]] +
                [[c.node, c.rank_a, c.rank_b, c.delta, int(c.singular)] for c in table.rows])
        out.update(baseline=cfg["compare"], spearman=table.spearman,
                   singularities=len(table.singularities()))
    run.json("rank.json", out)
    return out


def cmd_plot_matrix(run: Run, cfg) -> dict:
    g = read_edgelist(run.input("input", cfg["input"])).unweighted()
    rows, cols = _rankings(g, cfg["order_by"], cfg["variant"])
    if cfg["order_by"] == "fitness":
        # most ubiquitous (least complex) columns first, so the fill hugs the corner
        cols = cols.reversed()
    export = ordered_matrix(g, rows, cols)
    svg, cells, curves = plot_ordered_matrix(export, run.path("matrix.svg"), cfg["title"])
    run.outputs += [cells.name, curves.name]
    out = {"order_by": cfg["order_by"], "rows": g.n_rows, "cols": g.n_cols,
           "cells_outside_curve": export.cells_outside_curve()}
    run.json("matrix.json", out)
    return out


def cmd_series(run: Run, cfg) -> dict:
    d = _dump_dir(cfg)
    run.inputs["dir"] = {"path": str(d)}
    dumps = monthly_dumps(d, cfg["start"], cfg["end"])
    if len(dumps) < 2:
        raise GraphError(f"fewer than two monthly dumps between {cfg['start']} and {cfg['end']} in {d}")
    for day, path in dumps:
        run.input(f"dump_{day.isoformat()}", path)
    snaps = [load_snapshot(p) for _, p in dumps]
    sel = SelectionConfig(top_k=int(cfg["top_k"]))
    series = build_series(snaps, cfg["kind"], sel, seed=int(cfg["seed"]),
                          min_row_degree=int(cfg["min_row_degree"]), restarts=int(cfg["restarts"]))
    manifest = save_series(series, run.out / "series")
    run.outputs += [f"series/{p.name}" for p in sorted((run.out / "series").iterdir())]
    g0 = series.graphs[0]
    out = {"kind": cfg["kind"], "snapshots": len(series), "rows": g0.n_rows, "cols": g0.n_cols,
           "series_manifest": str(manifest)}
    return out


def cmd_predict(run: Run, cfg) -> dict:
    series = load_series(run.input("series", cfg["series"]))
    direction = "creation" if cfg["direction"] == "create" else "deletion"
    fit, preds, roc = predict(series, direction, bool(cfg["intercept"]), bool(cfg["standardize"]),
                              int(cfg["persist"]))
    # score grows with the predicted likelihood of the event, so roc can read this file back
    sign = -1.0 if direction == "creation" else 1.0
    rows = [["rank", "row", "col", "residual", "score", "label"]]
    rows += [[k + 1, r, c, repr(e), repr(sign * e), lab]
             for k, ((r, c, e), lab) in enumerate(zip(preds.candidates, roc.labels))]
    run.csv("predictions.csv", rows)
    _, twin = plot_roc(roc, run.path("roc.svg"), f"{direction} (AUC {roc.auc:.3f})")
    run.outputs.append(twin.name)
    out = {"direction": direction, "persist": int(cfg["persist"]), "auc": roc.auc,
           "positives": roc.n_positive, "negatives": roc.n_negative, "fit": fit.to_dict()}
    run.json("auc.json", out)
    return out


def cmd_roc(run: Run, cfg) -> dict:
    path = run.input("input", cfg["input"])
    scores, labels = [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"score", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: need 'score' and 'label' columns")
        for rec in reader:
            scores.append(float(rec["score"]))
            labels.append(int(rec["label"]))
    roc = roc_auc(scores, labels)
    _, twin = plot_roc(roc, run.path("roc.svg"))
    run.outputs.append(twin.name)
    out = {"auc": roc.auc, "positives": roc.n_positive, "negatives": roc.n_negative}
    run.json("auc.json", out)
    return out


COMMANDS = {
    "ingest": cmd_ingest, "graph": cmd_graph, "metric": cmd_metric, "test": cmd_test,
    "communities": cmd_communities, "rank": cmd_rank, "plot-matrix": cmd_plot_matrix,
    "series": cmd_series, "predict": cmd_predict, "roc": cmd_roc,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    given = {k: v for k, v in vars(ns).items() if k != "command"}
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = effective_config(ns.command, given)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nestkit: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, str(cfg["log_level"]).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(ns.command, cfg)
        result = COMMANDS[ns.command](run, cfg)
        run.manifest()
    except UsageError as exc:
        print(f"nestkit: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # module errors surface as exit 1 with their message
        log.debug("failure", exc_info=True)
        print(f"nestkit: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True, default=_finite))
    return 0


if __name__ == "__main__":
    sys.exit(main())
