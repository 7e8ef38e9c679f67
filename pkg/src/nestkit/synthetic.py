"""Synthetic bipartite fixtures with known nested or modular structure."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .graph import BipartiteGraph
from .linkpred import fit_probit, fitted_probabilities
from .temporal import SnapshotSeries


def staircase(n_rows: int, n_cols: int | None = None, threshold: int | None = None) -> np.ndarray:
    """``A[i, j] = 1`` iff ``i + j <= threshold``; a perfectly nested triangle."""
    n_cols = n_rows if n_cols is None else n_cols
    threshold = min(n_rows, n_cols) - 1 if threshold is None else threshold
    i = np.arange(n_rows)[:, None]
    j = np.arange(n_cols)[None, :]
    return (i + j <= threshold).astype(int)


def random_nested(n_rows: int, n_cols: int, rng: np.random.Generator,
                  distinct: bool = False, shuffle: bool = True) -> np.ndarray:
    """Perfectly nested matrix with random row degrees.

    Row ``i`` occupies a prefix of the columns, so every neighborhood is
    contained in the neighborhoods of rows with larger degree.  With
    ``distinct`` the row degrees are all different (needs
    ``n_cols >= n_rows``).  Rows and columns are permuted when ``shuffle``.
    """
    if distinct:
        if n_cols < n_rows:
            raise ValueError("distinct row degrees need n_cols >= n_rows")
        deg = np.sort(rng.choice(np.arange(1, n_cols + 1), size=n_rows, replace=False))[::-1]
        deg[0] = n_cols
    else:
        deg = rng.integers(1, n_cols + 1, size=n_rows)
        deg[0] = n_cols
    a = (np.arange(n_cols)[None, :] < deg[:, None]).astype(int)
    if shuffle:
        a = a[rng.permutation(n_rows)][:, rng.permutation(n_cols)]
    return a


def planted_blocks(size: int = 6, bridge: bool = True) -> np.ndarray:
    """Two disjoint staircases on the diagonal, optionally joined by one edge.

    The bridge links the first row of the first block to the first column
    of the second.
    """
    block = staircase(size)
    a = np.zeros((2 * size, 2 * size), dtype=int)
    a[:size, :size] = block
    a[size:, size:] = block
    if bridge:
        a[0, size] = 1
    return a


def noisy_nested(n: int, flip_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Staircase with each cell flipped independently with ``flip_prob``.

    Rows or columns left empty get their diagonal-most cell back so the
    matrix has no isolated nodes.
    """
    a = staircase(n)
    flips = rng.random(a.shape) < flip_prob
    a = np.where(flips, 1 - a, a)
    for i in np.flatnonzero(a.sum(axis=1) == 0):
        a[i, 0] = 1
    for j in np.flatnonzero(a.sum(axis=0) == 0):
        a[0, j] = 1
    return a


def staircase_frontier(a: np.ndarray) -> list[tuple[int, int]]:
    """Absent cells whose left and upper neighbours are present (or off the edge)."""
    out = []
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            if not a[i, j] and (j == 0 or a[i, j - 1]) and (i == 0 or a[i - 1, j]):
                out.append((i, j))
    return out


def nested_growth(n_rows: int = 20, n_cols: int = 25, steps: int = 10, hole_fraction: float = 0.08,
                  frontier_per_step: int = 4, seed: int = 0) -> list[np.ndarray]:
    """Matrices of a nested triangle that fills inward and grows at its frontier.

    The first matrix is the staircase ``i + j <= n_cols - 1`` with a random
    fraction of its interior cells removed.  The holes are filled over the
    first ``steps // 2`` steps.  At every step the ``frontier_per_step``
    frontier cells with the most negative residual under the probit fit of
    the first matrix are added.  Returns ``steps + 1`` matrices.
    """
    rng = np.random.default_rng(seed)
    threshold = n_cols - 1
    a = staircase(n_rows, n_cols, threshold)
    i, j = np.nonzero(a)
    interior = np.flatnonzero((i + j < threshold - 1) & (i > 0) & (j > 0))
    n_holes = int(round(hole_fraction * len(interior)))
    holes = [(int(i[k]), int(j[k])) for k in rng.choice(interior, size=n_holes, replace=False)]
    filled = a.copy()
    for cell in holes:
        a[cell] = 0
    g0 = BipartiteGraph.from_matrix(a)
    prob = fitted_probabilities(g0, fit_probit(g0))
    out = [a.copy()]
    per_step = int(np.ceil(len(holes) / max(1, steps // 2)))
    for _ in range(steps):
        for cell in holes[:per_step]:
            a[cell] = 1
        holes = holes[per_step:]
        front = sorted(staircase_frontier(filled), key=lambda c: (-prob[c], c))
        for cell in front[:frontier_per_step]:
            a[cell] = 1
            filled[cell] = 1
        out.append(a.copy())
    return out


def growth_series(n_rows: int = 20, n_cols: int = 25, steps: int = 10, hole_fraction: float = 0.08,
                  frontier_per_step: int = 4, seed: int = 0, start: dt.date = dt.date(2020, 1, 1)) -> SnapshotSeries:
    """:func:`nested_growth` as a monthly series on shared registries."""
    mats = nested_growth(n_rows, n_cols, steps, hole_fraction, frontier_per_step, seed)
    rows = tuple(f"r{i}" for i in range(n_rows))
    cols = tuple(f"c{j}" for j in range(n_cols))
    dates = []
    for k in range(len(mats)):
        y, m = divmod(start.month - 1 + k, 12)
        dates.append(dt.date(start.year + y, m + 1, 1))
    graphs = tuple(BipartiteGraph.from_matrix(m, rows, cols) for m in mats)
    return SnapshotSeries(tuple(dates), graphs, "synthetic_growth", {"seed": seed, "steps": steps})
