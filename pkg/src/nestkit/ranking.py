"""Node-level nestedness rankings: degree, fitness-complexity and betweenness."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .graph import BipartiteGraph, GraphError, degree_vectors

log = logging.getLogger(__name__)

SINGULARITY_DELTA = 10
# log-scores closer than this rank as ties
TIE_TOL = 1e-9


class FitnessConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class NodeRanking:
    """Nodes of one class ordered best first.

    ``order`` is sorted by decreasing score; equal scores fall back to
    ascending node id unless the producing function documents another key.
    """

    cls: str
    order: tuple[str, ...]
    scores: dict[str, float]
    metric_id: str
    info: dict = field(default_factory=dict)

    def rank(self) -> dict[str, int]:
        """1-based rank of each node."""
        return {n: i + 1 for i, n in enumerate(self.order)}

    def to_rows(self) -> list[tuple[str, float, int]]:
        return [(n, self.scores[n], i + 1) for i, n in enumerate(self.order)]

    def reversed(self) -> "NodeRanking":
        return NodeRanking(self.cls, self.order[::-1], self.scores, self.metric_id, self.info)


def _ranking(cls, nodes, scores, metric_id, secondary=None, info=None) -> NodeRanking:
    scores = np.asarray(scores, dtype=float)
    sec = np.zeros(len(nodes)) if secondary is None else np.asarray(secondary, dtype=float)
    idx = sorted(range(len(nodes)), key=lambda i: (-scores[i], -sec[i], nodes[i]))
    return NodeRanking(
        cls,
        tuple(nodes[i] for i in idx),
        {n: float(s) for n, s in zip(nodes, scores)},
        metric_id,
        info or {},
    )


def degree_ranking(g: BipartiteGraph) -> tuple[NodeRanking, NodeRanking]:
    dr, dc = degree_vectors(g)
    return (
        _ranking("row", g.row_nodes, dr, "degree"),
        _ranking("col", g.col_nodes, dc, "degree"),
    )


# -- fitness-complexity ------------------------------------------------------

def fc_step(a: np.ndarray, f: np.ndarray, q: np.ndarray, variant: str = "original",
            normalize: bool = True, col_names=None) -> tuple[np.ndarray, np.ndarray]:
    """One Jacobi update of fitness ``f`` and complexity ``q``.

    Both new vectors are built from the previous pair and then divided by
    their mean.  ``modified`` replaces ``sum_i A/f`` by ``sum_i A (1 - f)``.
    """
    f_new = a @ q
    if variant == "original":
        with np.errstate(divide="ignore"):
            inv = np.where(f > 0, 1.0 / f, np.inf)
        denom = a.T @ inv
        with np.errstate(divide="ignore"):
            q_new = np.where(denom > 0, 1.0 / denom, 0.0)
    elif variant == "modified":
        denom = a.T @ (1.0 - f)
        bad = np.flatnonzero(np.abs(denom) < 1e-12)
        if len(bad):
            name = col_names[bad[0]] if col_names is not None else int(bad[0])
            raise FitnessConvergenceError(f"zero complexity denominator at column {name}")
        q_new = 1.0 / denom
    else:
        raise ValueError(f"unknown fitness-complexity variant {variant!r}")
    if normalize:
        f_new = f_new / f_new.mean()
        q_new = q_new / q_new.mean()
    return f_new, q_new


def _fc_order(nodes, scores, deg, tie_tol=TIE_TOL):
    """Indices by decreasing log-score; runs of log-scores within ``tie_tol``
    of their neighbour count as tied and go by degree, then id.

    Nodes with equal true scores otherwise swap places on round-off alone.
    """
    if np.all(scores >= 0):
        with np.errstate(divide="ignore"):
            logs = np.log(scores)
    else:
        # the modified update can turn scores negative; rank those raw
        logs = np.asarray(scores, dtype=float)
    idx = sorted(range(len(nodes)), key=lambda i: (-logs[i], -deg[i], nodes[i]))
    out, group = [], []
    for i in idx:
        if group:
            prev = logs[group[-1]]
            same = prev == logs[i] or prev - logs[i] <= tie_tol
            if not same:
                out += sorted(group, key=lambda k: (-deg[k], nodes[k]))
                group = []
        group.append(i)
    out += sorted(group, key=lambda k: (-deg[k], nodes[k]))
    return tuple(out)


def fitness_complexity(g: BipartiteGraph, variant: str = "original", tol: float = 1e-10,
                       max_iter: int = 10000, stable_iters: int = 50) -> tuple[NodeRanking, NodeRanking]:
    """Fitness of rows and complexity of columns, as rankings.

    Iterates from uniform vectors until the largest relative change of any
    score drops below ``tol`` or both orderings stay unchanged for
    ``stable_iters`` consecutive iterations.  Rankings sort by log-score,
    then degree, then node id, so scores collapsing towards zero still rank
    deterministically.
    """
    if g.n_edges == 0:
        raise GraphError("empty graph")
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = g.biadjacency(dense=True)
    dr, dc = degree_vectors(g)
    if variant == "modified":
        f = np.full(g.n_rows, 0.5)
        q = np.full(g.n_cols, 0.5)
    else:
        f = np.ones(g.n_rows)
        q = np.ones(g.n_cols)
    prev_order = None
    stable = 0
    residual = np.inf
    how = None
    it = 0
    for it in range(1, max_iter + 1):
        f_new, q_new = fc_step(a, f, q, variant, col_names=g.col_nodes)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.concatenate([
                np.abs(f_new - f) / np.abs(f),
                np.abs(q_new - q) / np.abs(q),
            ])
        rel = rel[np.isfinite(rel)]
        residual = float(rel.max()) if len(rel) else 0.0
        f, q = f_new, q_new
        order = (_fc_order(g.row_nodes, f, dr), _fc_order(g.col_nodes, q, dc))
        stable = stable + 1 if order == prev_order else 0
        prev_order = order
        if residual < tol:
            how = "tolerance"
            break
        if stable >= stable_iters:
            how = "rank_stability"
            break
    else:
        raise FitnessConvergenceError(
            f"fitness-complexity did not converge in {max_iter} iterations "
            f"(last relative change {residual:.3e}, orders stable for {stable} iterations)"
        )
    info = {"iterations": it, "converged_by": how, "residual": residual, "variant": variant}
    rows = NodeRanking("row", tuple(g.row_nodes[i] for i in order[0]),
                       dict(zip(g.row_nodes, f.tolist())), "fitness", info)
    cols = NodeRanking("col", tuple(g.col_nodes[i] for i in order[1]),
                       dict(zip(g.col_nodes, q.tolist())), "complexity", info)
    return rows, cols


# -- betweenness ---------------------------------------------------------------

def _adjacency_lists(g: BipartiteGraph) -> list[list[int]]:
    nr = g.n_rows
    adj: list[list[int]] = [[] for _ in range(nr + g.n_cols)]
    r, c, _ = g._coo
    for i, j in zip(r.tolist(), c.tolist()):
        adj[i].append(nr + j)
        adj[nr + j].append(i)
    return adj


def betweenness_scores(g: BipartiteGraph) -> np.ndarray:
    """Brandes betweenness over rows then columns, as unnormalized pair counts.

    Each unordered pair of endpoints is counted once; endpoints themselves
    are not credited.
    """
    adj = _adjacency_lists(g)
    n = len(adj)
    bc = np.zeros(n)
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = np.zeros(n)
        sigma[s] = 1.0
        dist = np.full(n, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    return bc / 2.0


def betweenness(g: BipartiteGraph) -> tuple[NodeRanking, NodeRanking]:
    bc = betweenness_scores(g)
    nr = g.n_rows
    return (
        _ranking("row", g.row_nodes, bc[:nr], "betweenness"),
        _ranking("col", g.col_nodes, bc[nr:], "betweenness"),
    )


def rankings(g: BipartiteGraph, metric: str, **kw) -> tuple[NodeRanking, NodeRanking]:
    if metric == "degree":
        return degree_ranking(g)
    if metric in ("fitness", "complexity", "fitness_complexity"):
        return fitness_complexity(g, **kw)
    if metric == "betweenness":
        return betweenness(g)
    raise ValueError(f"unknown ranking metric {metric!r}")


# -- ordered matrix and comparisons -------------------------------------------

@dataclass(frozen=True)
class OrderedMatrixExport:
    row_order: tuple[str, ...]
    col_order: tuple[str, ...]
    matrix: np.ndarray
    diversity: np.ndarray
    ubiquity: np.ndarray

    def occupied_cells(self) -> list[tuple[int, int, str, str]]:
        ii, jj = np.nonzero(self.matrix)
        return [(int(i), int(j), self.row_order[i], self.col_order[j]) for i, j in zip(ii, jj)]

    def cells_outside_curve(self) -> int:
        """Occupied cells lying right of the diversity curve."""
        cols = np.arange(self.matrix.shape[1])[None, :]
        return int(np.sum(self.matrix & (cols >= self.diversity[:, None])))


def ordered_matrix(g: BipartiteGraph, ranking_rows: NodeRanking, ranking_cols: NodeRanking) -> OrderedMatrixExport:
    """Bi-adjacency matrix permuted to the given orders, with degree curves."""
    if set(ranking_rows.order) != set(g.row_nodes) or len(ranking_rows.order) != g.n_rows:
        raise GraphError("row ranking does not cover the row class")
    if set(ranking_cols.order) != set(g.col_nodes) or len(ranking_cols.order) != g.n_cols:
        raise GraphError("column ranking does not cover the column class")
    ri = [g.row_index[n] for n in ranking_rows.order]
    ci = [g.col_index[n] for n in ranking_cols.order]
    m = g.biadjacency(dense=True)[np.ix_(ri, ci)] > 0
    return OrderedMatrixExport(
        tuple(ranking_rows.order), tuple(ranking_cols.order), m,
        m.sum(axis=1).astype(int), m.sum(axis=0).astype(int),
    )


@dataclass(frozen=True)
class RankComparison:
    node: str
    rank_a: int
    rank_b: int
    delta: int

    @property
    def singular(self) -> bool:
        return abs(self.delta) >= SINGULARITY_DELTA


@dataclass(frozen=True)
class ComparisonTable:
    rows: list[RankComparison]
    spearman: float

    def singularities(self) -> list[RankComparison]:
        return [r for r in self.rows if r.singular]


def compare_rankings(a: NodeRanking, b: NodeRanking) -> ComparisonTable:
    """Rank of every node under ``a`` against baseline ``b``.

    ``delta = rank_b - rank_a``: positive when ``a`` places the node higher
    than the baseline.  Rows follow ``a``'s order.
    """
    if a.cls != b.cls or set(a.order) != set(b.order) or len(a.order) != len(b.order):
        raise GraphError("rankings cover different node sets")
    ra, rb = a.rank(), b.rank()
    rows = [RankComparison(n, ra[n], rb[n], rb[n] - ra[n]) for n in a.order]
    n = len(rows)
    if n < 2:
        rho = 1.0
    else:
        d2 = sum((r.rank_a - r.rank_b) ** 2 for r in rows)
        rho = 1.0 - 6.0 * d2 / (n * (n * n - 1))
    return ComparisonTable(rows, rho)
