"""Graph-level nestedness: NODF, null-model corrected NODF and spectral radius."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .graph import BipartiteGraph, GraphError

EXPECTATIONS = ("printed", "linear")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class MetricValue:
    metric_id: str
    value: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"metric": self.metric_id, "value": self.value, "detail": dict(self.detail)}


def _as_binary(m):
    if sparse.issparse(m):
        m = m.tocsr(copy=True)
        m.data[:] = 1.0
        return m
    return (np.asarray(m) != 0).astype(float)


def overlap_sum(a, d: np.ndarray) -> float:
    """Sum of ``O[i, j] / d[j]`` over ordered row pairs with ``d[i] > d[j]``.

    ``O = a @ a.T`` counts shared columns.  ``d`` is passed separately so a
    column-restricted block can be scored against full-graph degrees.
    Pairs with ``d[j] == 0`` contribute nothing.
    """
    if a.shape[0] < 2:
        return 0.0
    if sparse.issparse(a):
        o = (a @ a.T).tocoo()
        i, j, v = o.row, o.col, o.data
        keep = (d[i] > d[j]) & (d[j] > 0)
        return float(np.sum(v[keep] / d[j[keep]]))
    o = a @ a.T
    mask = (d[:, None] > d[None, :]) & (d[None, :] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(np.sum(np.where(mask, o / d[None, :], 0.0)))


def expected_overlap_sum(d: np.ndarray, n_other: int, expectation: str = "printed") -> float:
    """Sum of ``<O[i, j]> / d[j]`` over ordered pairs with ``d[i] > d[j] > 0``.

    ``<O[i, j]>`` is ``d[i] d[j] / n_other**2`` ("printed") or
    ``d[i] d[j] / n_other`` ("linear"), so each term reduces to
    ``d[i] / n_other**k`` and the sum is taken over sorted degrees.
    """
    if expectation not in EXPECTATIONS:
        raise ValueError(f"unknown expectation {expectation!r}")
    if len(d) < 2:
        return 0.0
    s = np.sort(d)
    suffix = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])
    pos = d[d > 0]
    idx = np.searchsorted(s, pos, side="right")
    total = float(np.sum(suffix[idx]))
    scale = n_other**2 if expectation == "printed" else n_other
    return total / scale


def nodf_matrix(a) -> tuple[float, float, float]:
    """NODF of a bi-adjacency matrix; returns ``(eta, eta_rows, eta_cols)``."""
    a = _as_binary(a)
    nr, nc = a.shape
    if nr < 2 or nc < 2:
        raise GraphError("NODF needs at least two rows and two columns")
    dr = np.asarray(a.sum(axis=1)).ravel()
    dc = np.asarray(a.sum(axis=0)).ravel()
    er = overlap_sum(a, dr)
    ec = overlap_sum(a.T, dc)
    norm = nr * (nr - 1) / 2 + nc * (nc - 1) / 2
    return (er + ec) / norm, er, ec


def eta_tilde_matrix(a, expectation: str = "printed") -> tuple[float, float, float]:
    """Null-model corrected NODF; returns ``(value, row_term, col_term)``.

    The row and column terms are the braces' summands before the common
    ``2 / (Nr + Nc)`` prefactor.
    """
    a = _as_binary(a)
    nr, nc = a.shape
    if nr < 2 or nc < 2:
        raise GraphError("eta_tilde needs at least two rows and two columns")
    dr = np.asarray(a.sum(axis=1)).ravel()
    dc = np.asarray(a.sum(axis=0)).ravel()
    row_term = (overlap_sum(a, dr) - expected_overlap_sum(dr, nc, expectation)) / (nr - 1)
    col_term = (overlap_sum(a.T, dc) - expected_overlap_sum(dc, nr, expectation)) / (nc - 1)
    return 2.0 / (nr + nc) * (row_term + col_term), row_term, col_term


def spectral_radius_matrix(b, tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Largest singular value of ``b`` by power iteration on the Gram matrix.

    Iterates on ``b @ b.T`` or ``b.T @ b`` (whichever is smaller) from the
    all-ones vector and stops once the Rayleigh quotient changes by less than
    ``tol`` relative.
    """
    if b.shape[0] == 0 or b.shape[1] == 0:
        raise GraphError("empty graph")
    if sparse.issparse(b):
        b = b.tocsr()
    bt = b.T
    if b.shape[0] > b.shape[1]:
        b, bt = bt, b

    def apply(x):
        return b @ (bt @ x)

    x = np.ones(b.shape[0])
    x /= np.linalg.norm(x)
    lam = 0.0
    change = np.inf
    for _ in range(max_iter):
        y = np.asarray(apply(x)).ravel()
        new = float(x @ y)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        change = abs(new - lam) / abs(new)
        if change <= tol:
            return float(np.sqrt(max(new, 0.0)))
        lam = new
    raise ConvergenceError("spectral radius power iteration did not converge", change)


def nodf(g: BipartiteGraph) -> MetricValue:
    value, er, ec = nodf_matrix(g.biadjacency())
    return MetricValue("nodf", value, {"eta_rows": er, "eta_cols": ec})


def eta_tilde(g: BipartiteGraph, expectation: str = "printed") -> MetricValue:
    value, rt, ct = eta_tilde_matrix(g.biadjacency(), expectation)
    return MetricValue("eta_tilde", value, {"row_term": rt, "col_term": ct, "expectation": expectation})


def spectral_radius(g: BipartiteGraph, weighted: bool = False) -> MetricValue:
    if g.n_edges == 0:
        raise GraphError("empty graph")
    rho = spectral_radius_matrix(g.biadjacency(weighted=weighted))
    return MetricValue("spectral_radius", rho, {"weighted": weighted})


METRICS = {
    "nodf": lambda g, weighted=False: nodf(g),
    "eta_tilde": lambda g, weighted=False: eta_tilde(g),
    "spectral_radius": lambda g, weighted=False: spectral_radius(g, weighted),
}

MATRIX_METRICS = {
    "nodf": lambda m: nodf_matrix(m)[0],
    "eta_tilde": lambda m: eta_tilde_matrix(m)[0],
    "spectral_radius": spectral_radius_matrix,
}

ALIASES = {"eta": "eta_tilde", "rho": "spectral_radius", "nodf": "nodf"}


def resolve_metric(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in METRICS:
        raise ValueError(f"unknown metric {name!r}")
    return name
