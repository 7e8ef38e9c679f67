"""PeeringDB dump parsing and construction of the AS-IXP and AS-country graphs."""

from __future__ import annotations

import bz2
import datetime as dt
import gzip
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .graph import BipartiteGraph, GraphError, degrees, largest_connected_component
from .metrics import ConvergenceError
from .ranking import NodeRanking, _ranking

log = logging.getLogger(__name__)

BALANCED = "Balanced"
DEFAULT_RATIO_WEIGHTS = {
    "Balanced": (1.0, 1.0),
    "Mostly Inbound": (2.0, 1.0),
    "Heavy Inbound": (4.0, 1.0),
    "Mostly Outbound": (1.0, 2.0),
    "Heavy Outbound": (1.0, 4.0),
    "Not Disclosed": (1.0, 1.0),
}
SELECTION_METRICS = ("degree", "pagerank", "reverse_pagerank")

# hypergiants: ASes that use IXPs to reach a global footprint
HYPERGIANTS = {
    "714": "Apple Inc",
    "16509": "Amazon.com",
    "32934": "Facebook",
    "15169": "Google",
    "20940": "Akamai Technologies",
    "10310": "Yahoo!",
    "2906": "Netflix",
    "6939": "Hurricane Electric",
    "16276": "OVH",
    "22822": "Limelight Networks Global",
    "8075": "Microsoft",
    "13414": "Twitter",
    "46489": "Twitch",
    "13335": "Cloudflare",
    "15133": "Verizon Digital Media Services",
}

_DATE_RE = re.compile(r"(\d{4})[-_]?(\d{2})[-_]?(\d{2})")


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Network:
    asn: str
    name: str = ""
    info_ratio: str = BALANCED


@dataclass(frozen=True)
class Exchange:
    ix_id: str
    name: str = ""
    country: str = ""


@dataclass
class PeeringSnapshot:
    """Normalized view of one PeeringDB dump.

    ``memberships`` maps ``(asn, ix_id)`` to the summed port speed in Mbps.
    ``dropped`` counts membership records discarded while cleaning.
    """

    date: dt.date | None
    networks: dict[str, Network]
    exchanges: dict[str, Exchange]
    memberships: dict[tuple[str, str], float]
    dropped: dict[str, int] = field(default_factory=dict)

    def port_capacity(self) -> dict[str, float]:
        cap: dict[str, float] = {}
        for (asn, _), speed in self.memberships.items():
            cap[asn] = cap.get(asn, 0.0) + speed
        return cap

    def summary(self) -> dict:
        return {
            "date": self.date.isoformat() if self.date else None,
            "networks": len(self.networks),
            "exchanges": len(self.exchanges),
            "memberships": len(self.memberships),
            "dropped": dict(self.dropped),
        }


@dataclass
class SelectionConfig:
    """Which central ASes enter the AS-country graph.

    ``ratio_weight_table`` maps a PeeringDB traffic-ratio category to
    ``(inbound, outbound)`` multipliers applied to port speeds when building
    the directed graph for PageRank.
    """

    top_k: int = 100
    metrics: tuple[str, ...] = SELECTION_METRICS
    damping: float = 0.85
    ratio_weight_table: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_RATIO_WEIGHTS))
    tol: float = 1e-10
    max_iter: int = 1000

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        unknown = set(self.metrics) - set(SELECTION_METRICS)
        if unknown:
            raise ValueError(f"unknown selection metric(s): {sorted(unknown)}")
        for k, (i, o) in self.ratio_weight_table.items():
            if i < 0 or o < 0:
                raise ValueError(f"negative multiplier for ratio {k!r}")

    def multipliers(self, ratio: str | None) -> tuple[float, float]:
        table = self.ratio_weight_table
        return table.get(ratio or BALANCED, table.get(BALANCED, (1.0, 1.0)))


# -- parsing -------------------------------------------------------------------

def _decompress(data: bytes) -> bytes:
    if data[:3] == b"BZh":
        return bz2.decompress(data)
    if data[:2] == b"\x1f\x8b":
        return gzip.decompress(data)
    return data


def _records(doc: dict, key: str) -> list[dict]:
    if key not in doc:
        raise SnapshotFormatError(f"dump has no '{key}' collection")
    coll = doc[key]
    if isinstance(coll, dict):
        coll = coll.get("data", [])
    if not isinstance(coll, list):
        raise SnapshotFormatError(f"'{key}' collection is not a list of records")
    return coll


def date_from_name(name: str) -> dt.date | None:
    m = _DATE_RE.search(Path(name).name)
    if not m:
        return None
    try:
        return dt.date(int(m[1]), int(m[2]), int(m[3]))
    except ValueError:
        return None


def parse_snapshot(data: bytes, date: dt.date | None = None) -> PeeringSnapshot:
    """Parse a PeeringDB JSON dump with ``net``, ``ix`` and ``netixlan`` collections.

    Memberships whose ASN or exchange is not declared are dropped and
    counted; repeated ``(asn, ix)`` pairs are merged by summing speed.
    Memberships that carry only ``ixlan_id`` are resolved through an
    ``ixlan`` collection when the dump has one.
    """
    try:
        doc = json.loads(_decompress(data).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError, OSError, EOFError) as exc:
        raise SnapshotFormatError(f"unreadable dump: {exc}") from exc
    if not isinstance(doc, dict):
        raise SnapshotFormatError("dump root is not an object")

    networks = {}
    for rec in _records(doc, "net"):
        if rec.get("asn") is None:
            continue
        asn = str(rec["asn"])
        networks[asn] = Network(asn, rec.get("name") or "", rec.get("info_ratio") or BALANCED)
    exchanges = {}
    for rec in _records(doc, "ix"):
        if rec.get("id") is None:
            continue
        ix = str(rec["id"])
        exchanges[ix] = Exchange(ix, rec.get("name") or "", (rec.get("country") or "").strip())
    ixlan_to_ix = {}
    if "ixlan" in doc:
        for rec in _records(doc, "ixlan"):
            if rec.get("id") is not None and rec.get("ix_id") is not None:
                ixlan_to_ix[str(rec["id"])] = str(rec["ix_id"])

    dropped = {"unknown_asn": 0, "unknown_ix": 0, "merged_duplicates": 0}
    memberships: dict[tuple[str, str], float] = {}
    for rec in _records(doc, "netixlan"):
        asn = rec.get("asn")
        ix = rec.get("ix_id")
        if ix is None and rec.get("ixlan_id") is not None:
            ix = ixlan_to_ix.get(str(rec["ixlan_id"]))
        asn = None if asn is None else str(asn)
        ix = None if ix is None else str(ix)
        if asn not in networks:
            dropped["unknown_asn"] += 1
            continue
        if ix not in exchanges:
            dropped["unknown_ix"] += 1
            continue
        speed = float(rec.get("speed") or 0.0)
        if speed < 0:
            raise SnapshotFormatError(f"negative speed for AS{asn} at IX {ix}")
        key = (asn, ix)
        if key in memberships:
            dropped["merged_duplicates"] += 1
            memberships[key] += speed
        else:
            memberships[key] = speed

    if date is None:
        meta = doc.get("meta") or {}
        gen = meta.get("generated") if isinstance(meta, dict) else None
        if isinstance(gen, (int, float)):
            date = dt.datetime.fromtimestamp(gen, dt.timezone.utc).date()
    return PeeringSnapshot(date, networks, exchanges, memberships, dropped)


def load_snapshot(path) -> PeeringSnapshot:
    path = Path(path)
    return parse_snapshot(path.read_bytes(), date_from_name(path.name))


# -- graph construction -------------------------------------------------------

def _edge_weight(speed: float) -> float:
    # zero-speed memberships still mark presence
    return speed if speed > 0 else 1.0


def build_as_ixp(s: PeeringSnapshot, connected: bool = True, stats: dict | None = None) -> BipartiteGraph:
    """AS x IXP graph weighted by summed port speed, reduced to its main component."""
    if not s.memberships:
        raise GraphError("snapshot has no memberships")
    rows = sorted({a for a, _ in s.memberships}, key=_id_key)
    cols = sorted({x for _, x in s.memberships}, key=_id_key)
    edges = {k: _edge_weight(v) for k, v in s.memberships.items()}
    g = BipartiteGraph(
        tuple(rows), tuple(cols), edges,
        {a: s.networks[a].name for a in rows},
        {x: s.exchanges[x].name for x in cols},
    )
    if stats is not None:
        stats.update(raw_rows=g.n_rows, raw_cols=g.n_cols, raw_edges=g.n_edges)
    if connected:
        g = largest_connected_component(g)
    return g


def _id_key(x: str):
    return (0, int(x), x) if x.isdigit() else (1, 0, x)


def pagerank_matrix(g: BipartiteGraph, out_mult: np.ndarray, in_mult: np.ndarray,
                    reverse: bool = False, damping: float = 0.85, tol: float = 1e-10,
                    max_iter: int = 1000) -> np.ndarray:
    """PageRank over the directed version of ``g``; rows first, then columns.

    Row ``i`` links to column ``a`` with weight ``w * out_mult[i]`` and column
    ``a`` back to row ``i`` with weight ``w * in_mult[i]``.  ``reverse`` runs
    on the transposed graph.  Dangling mass is spread uniformly.
    """
    nr, nc = g.n_rows, g.n_cols
    n = nr + nc
    r, c, w = g._coo
    src = np.concatenate([r, nr + c])
    dst = np.concatenate([nr + c, r])
    wt = np.concatenate([w * out_mult[r], w * in_mult[r]])
    if reverse:
        src, dst = dst, src
    keep = wt > 0
    src, dst, wt = src[keep], dst[keep], wt[keep]
    out_w = np.bincount(src, wt, minlength=n)
    trans = sparse.csr_matrix((wt / out_w[src], (dst, src)), shape=(n, n))
    dangling = out_w == 0
    p = np.full(n, 1.0 / n)
    residual = np.inf
    for _ in range(max_iter):
        new = damping * (trans @ p + p[dangling].sum() / n) + (1.0 - damping) / n
        new /= new.sum()
        residual = float(np.abs(new - p).sum())
        p = new
        if residual < tol:
            return p
    raise ConvergenceError(f"PageRank did not converge in {max_iter} iterations", residual)


def pagerank_scores(s: PeeringSnapshot, direction: str = "forward", cfg: SelectionConfig | None = None,
                    graph: BipartiteGraph | None = None) -> NodeRanking:
    """PageRank (or reverse PageRank) of ASes in the directed AS-IXP graph."""
    if direction not in ("forward", "reverse"):
        raise ValueError(f"unknown PageRank direction {direction!r}")
    cfg = cfg or SelectionConfig()
    g = graph if graph is not None else build_as_ixp(s)
    mult = np.array([cfg.multipliers(s.networks[a].info_ratio if a in s.networks else None)
                     for a in g.row_nodes], dtype=float).reshape(-1, 2)
    pr = pagerank_matrix(g, mult[:, 1], mult[:, 0], reverse=direction == "reverse",
                         damping=cfg.damping, tol=cfg.tol, max_iter=cfg.max_iter)
    metric = "pagerank" if direction == "forward" else "reverse_pagerank"
    return _ranking("row", g.row_nodes, pr[: g.n_rows], metric,
                    info={"col_scores": dict(zip(g.col_nodes, pr[g.n_rows:].tolist()))})


def select_central(s: PeeringSnapshot, sel: SelectionConfig, graph: BipartiteGraph | None = None) -> dict[str, list[str]]:
    """Top-k AS ids under each configured centrality metric."""
    g = graph if graph is not None else build_as_ixp(s)
    out = {}
    for metric in sel.metrics:
        if metric == "degree":
            deg = degrees(g, "row")
            ranking = _ranking("row", g.row_nodes, [deg[n] for n in g.row_nodes], "degree")
        else:
            direction = "forward" if metric == "pagerank" else "reverse"
            ranking = pagerank_scores(s, direction, sel, graph=g)
        out[metric] = list(ranking.order[: sel.top_k])
    return out


def build_as_country(s: PeeringSnapshot, sel: SelectionConfig | None = None,
                     stats: dict | None = None, ases=None) -> BipartiteGraph:
    """AS x country graph over the most central ASes.

    IXPs of the unfiltered AS-IXP graph are merged by their declared country;
    an edge weighs the AS's total port speed in that country.  Rows are the
    union of the top-k sets of ``sel`` unless ``ases`` fixes them.
    """
    sel = sel or SelectionConfig()
    # raw memberships: small AS-IXP components can still join through a country
    full = build_as_ixp(s, connected=False)
    if ases is None:
        picked = select_central(s, sel, graph=full)
        chosen = set().union(*picked.values()) if picked else set()
    else:
        picked = {}
        chosen = set(map(str, ases))
    weights: dict[tuple[str, str], float] = {}
    no_country = set()
    for (asn, ix) in full.edges:
        if asn not in chosen:
            continue
        country = s.exchanges[ix].country
        if not country:
            no_country.add(ix)
            continue
        key = (asn, country)
        weights[key] = weights.get(key, 0.0) + s.memberships[(asn, ix)]
    if not weights:
        raise GraphError("no AS-country links")
    edges = {k: _edge_weight(v) for k, v in weights.items()}
    rows = sorted({a for a, _ in edges}, key=_id_key)
    cols = sorted({c for _, c in edges})
    g = BipartiteGraph(tuple(rows), tuple(cols), edges, {a: s.networks[a].name for a in rows})
    if stats is not None:
        stats.update(
            selected_ases=len(chosen),
            selection={k: len(v) for k, v in picked.items()},
            ixps_without_country=len(no_country),
            memberships_without_country=sum(1 for (a, x) in full.edges if a in chosen and x in no_country),
        )
    return largest_connected_component(g)


def provenance(s: PeeringSnapshot, g: BipartiteGraph, kind: str, stats: dict | None = None) -> dict:
    return {
        "kind": kind,
        "snapshot": s.summary(),
        "graph": {"rows": g.n_rows, "cols": g.n_cols, "edges": g.n_edges},
        "build": stats or {},
    }
