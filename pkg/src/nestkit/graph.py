"""Bipartite graph model, structural diagnostics and conditioning."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

log = logging.getLogger(__name__)

# Dense views are only materialized below this many cells.
DENSE_CELL_BUDGET = 10**8


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Immutable bipartite graph between a row class and a column class.

    ``edges`` maps ``(row_id, col_id)`` to a strictly positive weight;
    unweighted graphs carry weight 1.0 on every edge.  Node registries keep
    their insertion order, which defines the row/column order of the
    bi-adjacency matrix.
    """

    row_nodes: tuple[str, ...]
    col_nodes: tuple[str, ...]
    edges: Mapping[tuple[str, str], float]
    row_labels: Mapping[str, str] = field(default_factory=dict)
    col_labels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "row_nodes", tuple(self.row_nodes))
        object.__setattr__(self, "col_nodes", tuple(self.col_nodes))
        if len(set(self.row_nodes)) != len(self.row_nodes):
            raise GraphError("duplicate row node")
        if len(set(self.col_nodes)) != len(self.col_nodes):
            raise GraphError("duplicate column node")
        rows, cols = self.row_index, self.col_index
        clean = {}
        for (r, c), w in self.edges.items():
            if r not in rows or c not in cols:
                raise GraphError(f"edge ({r}, {c}) has an unknown endpoint")
            w = float(w)
            if not w > 0 or not np.isfinite(w):
                raise GraphError(f"edge ({r}, {c}) has non-positive weight {w}")
            clean[(r, c)] = w
        object.__setattr__(self, "edges", clean)
        object.__setattr__(self, "row_labels", {k: v for k, v in self.row_labels.items() if k in rows})
        object.__setattr__(self, "col_labels", {k: v for k, v in self.col_labels.items() if k in cols})

    @classmethod
    def from_edges(cls, edges: Iterable, row_nodes=None, col_nodes=None):
        """Build a graph from ``(row, col)`` or ``(row, col, weight)`` tuples.

        Node registries default to first-appearance order.  A repeated pair is
        an error; merge duplicates before calling.
        """
        emap = {}
        rseen, cseen = {}, {}
        for e in edges:
            r, c = str(e[0]), str(e[1])
            w = float(e[2]) if len(e) > 2 else 1.0
            if (r, c) in emap:
                raise GraphError(f"duplicate edge ({r}, {c})")
            emap[(r, c)] = w
            rseen.setdefault(r, None)
            cseen.setdefault(c, None)
        rows = list(rseen) if row_nodes is None else [str(x) for x in row_nodes]
        cols = list(cseen) if col_nodes is None else [str(x) for x in col_nodes]
        return cls(tuple(rows), tuple(cols), emap)

    @classmethod
    def from_matrix(cls, matrix, row_nodes=None, col_nodes=None):
        """Graph whose bi-adjacency matrix is ``matrix`` (non-zero = edge)."""
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2:
            raise GraphError("matrix must be 2-D")
        nr, nc = m.shape
        rows = [f"r{i}" for i in range(nr)] if row_nodes is None else list(row_nodes)
        cols = [f"c{j}" for j in range(nc)] if col_nodes is None else list(col_nodes)
        ii, jj = np.nonzero(m)
        edges = {(rows[i], cols[j]): float(m[i, j]) for i, j in zip(ii, jj)}
        return cls(tuple(map(str, rows)), tuple(map(str, cols)), edges)

    @property
    def n_rows(self) -> int:
        return len(self.row_nodes)

    @property
    def n_cols(self) -> int:
        return len(self.col_nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def row_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.row_nodes)}

    @cached_property
    def col_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.col_nodes)}

    @cached_property
    def is_weighted(self) -> bool:
        return any(w != 1.0 for w in self.edges.values())

    @cached_property
    def _coo(self):
        ri, ci = self.row_index, self.col_index
        n = len(self.edges)
        r = np.fromiter((ri[a] for a, _ in self.edges), dtype=np.int64, count=n)
        c = np.fromiter((ci[b] for _, b in self.edges), dtype=np.int64, count=n)
        w = np.fromiter(self.edges.values(), dtype=float, count=n)
        return r, c, w

    def biadjacency(self, weighted: bool = False, dense: bool | None = None):
        """Bi-adjacency matrix ``B`` (rows x cols).

        Returns a dense ``ndarray`` when ``dense`` is true, or when it is None
        and the matrix fits in ``DENSE_CELL_BUDGET`` cells; a CSR matrix
        otherwise.
        """
        r, c, w = self._coo
        data = w if weighted else np.ones_like(w)
        if dense is None:
            dense = self.n_rows * self.n_cols <= DENSE_CELL_BUDGET
        if dense:
            m = np.zeros((self.n_rows, self.n_cols))
            m[r, c] = data
            return m
        return sparse.csr_matrix((data, (r, c)), shape=(self.n_rows, self.n_cols))

    def neighbors(self, node: str, cls: str = "row") -> list[str]:
        if cls == "row":
            return [c for (r, c) in self.edges if r == node]
        return [r for (r, c) in self.edges if c == node]

    def subgraph(self, rows: Iterable[str], cols: Iterable[str]) -> "BipartiteGraph":
        """Induced subgraph; registry order of ``self`` is preserved."""
        rs, cs = set(rows), set(cols)
        row_nodes = tuple(n for n in self.row_nodes if n in rs)
        col_nodes = tuple(n for n in self.col_nodes if n in cs)
        edges = {(r, c): w for (r, c), w in self.edges.items() if r in rs and c in cs}
        return BipartiteGraph(row_nodes, col_nodes, edges, self.row_labels, self.col_labels)

    def unweighted(self) -> "BipartiteGraph":
        return BipartiteGraph(
            self.row_nodes, self.col_nodes, dict.fromkeys(self.edges, 1.0),
            self.row_labels, self.col_labels,
        )

    def with_weights(self, weights: Iterable[float]) -> "BipartiteGraph":
        """Same topology, new weights given in ``edges`` iteration order."""
        edges = dict(zip(self.edges, weights))
        if len(edges) != len(self.edges):
            raise GraphError("weight count does not match edge count")
        return BipartiteGraph(self.row_nodes, self.col_nodes, edges, self.row_labels, self.col_labels)

    def __eq__(self, other):
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (
            self.row_nodes == other.row_nodes
            and self.col_nodes == other.col_nodes
            and self.edges == other.edges
        )

    def __hash__(self):
        return hash((self.row_nodes, self.col_nodes, frozenset(self.edges.items())))

    def __repr__(self):
        return f"BipartiteGraph(rows={self.n_rows}, cols={self.n_cols}, edges={self.n_edges})"


@dataclass(frozen=True)
class GraphDiagnostics:
    n_rows: int
    n_cols: int
    n_edges: int
    eccentricity: float
    fill: float
    is_connected: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _components(g: BipartiteGraph) -> tuple[int, np.ndarray]:
    nr, nc = g.n_rows, g.n_cols
    r, c, _ = g._coo
    n = nr + nc
    adj = sparse.coo_matrix((np.ones(len(r)), (r, c + nr)), shape=(n, n))
    return connected_components(adj, directed=False)


def diagnostics(g: BipartiteGraph) -> GraphDiagnostics:
    """Node/edge counts, eccentricity ``|Nr - Nc| / (Nr + Nc)``, fill and connectivity."""
    if g.n_rows == 0 or g.n_cols == 0:
        raise GraphError("empty graph")
    nr, nc = g.n_rows, g.n_cols
    ncomp, _ = _components(g)
    return GraphDiagnostics(
        n_rows=nr,
        n_cols=nc,
        n_edges=g.n_edges,
        eccentricity=abs(nr - nc) / (nr + nc),
        fill=g.n_edges / (nr * nc),
        is_connected=ncomp == 1,
    )


def largest_connected_component(g: BipartiteGraph) -> BipartiteGraph:
    """Induced subgraph on the component with the most nodes.

    Equal-size components are ranked by their sorted node-id tuple, the
    lexicographically smallest winning.
    """
    n = g.n_rows + g.n_cols
    if n == 0:
        raise GraphError("empty graph")
    ncomp, labels = _components(g)
    if ncomp == 1:
        return g
    nodes = list(g.row_nodes) + list(g.col_nodes)
    sizes = np.bincount(labels, minlength=ncomp)
    best = np.flatnonzero(sizes == sizes.max())
    if len(best) > 1:
        key = {b: tuple(sorted(nodes[i] for i in np.flatnonzero(labels == b))) for b in best}
        winner = min(best, key=lambda b: key[b])
    else:
        winner = best[0]
    mask = labels == winner
    rows = [nodes[i] for i in np.flatnonzero(mask[: g.n_rows])]
    cols = [g.col_nodes[i] for i in np.flatnonzero(mask[g.n_rows :])]
    return g.subgraph(rows, cols)


def degrees(g: BipartiteGraph, cls: str = "row") -> dict[str, int]:
    """Number of links per node of class ``cls`` ('row' or 'col')."""
    r, c, _ = g._coo
    if cls == "row":
        counts = np.bincount(r, minlength=g.n_rows)
        return dict(zip(g.row_nodes, counts.tolist()))
    if cls == "col":
        counts = np.bincount(c, minlength=g.n_cols)
        return dict(zip(g.col_nodes, counts.tolist()))
    raise GraphError(f"unknown node class {cls!r}")


def weighted_degrees(g: BipartiteGraph, cls: str = "row") -> dict[str, float]:
    """Sum of link weights per node; for AS rows this is the port capacity."""
    r, c, w = g._coo
    if cls == "row":
        return dict(zip(g.row_nodes, np.bincount(r, w, minlength=g.n_rows).tolist()))
    if cls == "col":
        return dict(zip(g.col_nodes, np.bincount(c, w, minlength=g.n_cols).tolist()))
    raise GraphError(f"unknown node class {cls!r}")


def degree_vectors(g: BipartiteGraph) -> tuple[np.ndarray, np.ndarray]:
    r, c, _ = g._coo
    return (
        np.bincount(r, minlength=g.n_rows).astype(float),
        np.bincount(c, minlength=g.n_cols).astype(float),
    )


def degree_filter(g: BipartiteGraph, min_row_degree: int) -> BipartiteGraph:
    """Keep rows with degree >= ``min_row_degree``, drop isolated columns, take the LCC.

    A single pass: columns removed here may leave rows below the threshold,
    and those rows are kept.
    """
    if min_row_degree < 0:
        raise GraphError("min_row_degree must be >= 0")
    deg = degrees(g, "row")
    rows = [n for n in g.row_nodes if deg[n] >= min_row_degree]
    keep = set(rows)
    cols = {c for (r, c) in g.edges if r in keep}
    if min_row_degree == 0:
        cols = set(g.col_nodes)
    sub = g.subgraph(rows, cols)
    if sub.n_rows == 0 or sub.n_cols == 0:
        raise GraphError("graph emptied by filter")
    return largest_connected_component(sub)


# -- edge-list I/O ----------------------------------------------------------

def read_edgelist(path) -> BipartiteGraph:
    """Read ``row<TAB>col[<TAB>weight]`` lines; ``#`` starts a comment."""
    edges = {}
    rows, cols = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise GraphError(f"{path}:{lineno}: expected 2 or 3 tab-separated fields")
            r, c = parts[0].strip(), parts[1].strip()
            w = float(parts[2]) if len(parts) == 3 else 1.0
            if (r, c) in edges:
                raise GraphError(f"{path}:{lineno}: duplicate edge ({r}, {c})")
            edges[(r, c)] = w
            rows.setdefault(r, None)
            cols.setdefault(c, None)
    return BipartiteGraph(tuple(rows), tuple(cols), edges)


def write_edgelist(g: BipartiteGraph, path, header: str | None = None) -> None:
    weighted = g.is_weighted
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for (r, c), w in g.edges.items():
            if weighted:
                fh.write(f"{r}\t{c}\t{w!r}\n")
            else:
                fh.write(f"{r}\t{c}\n")


def write_diagnostics(g: BipartiteGraph, path) -> None:
    Path(path).write_text(json.dumps(diagnostics(g).to_dict(), indent=2, sort_keys=True) + "\n")
