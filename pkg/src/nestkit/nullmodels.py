"""Random bipartite ensembles and the p-value / z-score significance protocol."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import metrics
from .graph import BipartiteGraph, GraphError, degree_vectors

log = logging.getLogger(__name__)

MODELS = ("pp_bascompte", "pp_corrected", "weight_shuffle")
MODEL_ALIASES = {
    "pp": "pp_bascompte",
    "bascompte": "pp_bascompte",
    "ppc": "pp_corrected",
    "corrected": "pp_corrected",
    "shuffle": "weight_shuffle",
}
MAX_RETRIES = 1000
MIN_ENSEMBLE = 100


class NullModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class NullEnsemble:
    model_id: str
    metric_id: str
    values: np.ndarray
    seed: int

    @property
    def size(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SignificanceResult:
    """Outcome of comparing an observed metric to a null ensemble.

    ``z_score`` is +/-inf when the ensemble has zero spread and the
    observation differs from it; ``degenerate`` flags that case (and the
    zero-spread, zero-difference case, where ``z_score`` is 0).
    """

    p_value: float
    z_score: float
    observed: float
    ensemble_mean: float
    ensemble_std: float
    size: int
    metric_id: str
    model_id: str
    seed: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        z = self.z_score
        if math.isinf(z):
            z = "+inf" if z > 0 else "-inf"
        return {
            "metric": self.metric_id,
            "null": self.model_id,
            "size": self.size,
            "seed": self.seed,
            "observed": self.observed,
            "p_value": self.p_value,
            "z_score": z,
            "ensemble_mean": self.ensemble_mean,
            "ensemble_std": self.ensemble_std,
            "degenerate": self.degenerate,
        }


def resolve_model(name: str) -> str:
    name = MODEL_ALIASES.get(name, name)
    if name not in MODELS:
        raise ValueError(f"unknown null model {name!r}")
    return name


def pp_probabilities(a: np.ndarray) -> np.ndarray:
    """Cell probabilities ``(d_row/Nc + d_col/Nr) / 2`` clamped to [0, 1]."""
    nr, nc = a.shape
    dr = a.sum(axis=1)
    dc = a.sum(axis=0)
    p = 0.5 * (dr[:, None] / nc + dc[None, :] / nr)
    return np.clip(p, 0.0, 1.0)


def sample_pp(p: np.ndarray, rng: np.random.Generator, corrected: bool = False) -> np.ndarray:
    """One binary matrix with independent cells ``Bernoulli(p)``.

    The corrected variant redraws the whole matrix until no row and no column
    is empty, giving up after ``MAX_RETRIES`` draws.
    """
    if not corrected:
        return (rng.random(p.shape) < p).astype(float)
    empty_rows = empty_cols = 0
    for _ in range(MAX_RETRIES):
        m = rng.random(p.shape) < p
        rows_ok = m.any(axis=1).all()
        cols_ok = m.any(axis=0).all()
        if rows_ok and cols_ok:
            return m.astype(float)
        empty_rows += not rows_ok
        empty_cols += not cols_ok
    cls = "row" if empty_rows >= empty_cols else "column"
    raise NullModelError(
        f"corrected PP: every one of {MAX_RETRIES} draws had an empty {cls} "
        f"(empty rows in {empty_rows}, empty columns in {empty_cols})"
    )


def generate_pp(g: BipartiteGraph, variant: str = "bascompte", seed: int = 0) -> BipartiteGraph:
    """Random graph from the proportional-proportional null model of ``g``.

    Node registries are kept, so Bascompte samples may contain isolated nodes.
    """
    if g.n_rows == 0 or g.n_cols == 0 or g.n_edges == 0:
        raise GraphError("empty graph")
    if variant not in ("bascompte", "corrected"):
        raise ValueError(f"unknown PP variant {variant!r}")
    p = pp_probabilities(g.biadjacency(dense=True))
    m = sample_pp(p, np.random.default_rng(seed), corrected=variant == "corrected")
    return BipartiteGraph.from_matrix(m, g.row_nodes, g.col_nodes)


def shuffle_weights(g: BipartiteGraph, seed: int = 0) -> BipartiteGraph:
    """Same links, weights randomly permuted among them."""
    if not g.is_weighted:
        raise NullModelError("nothing to shuffle")
    w = np.fromiter(g.edges.values(), dtype=float, count=g.n_edges)
    perm = np.random.default_rng(seed).permutation(len(w))
    return g.with_weights(w[perm].tolist())


def _member_factory(g: BipartiteGraph, model_id: str, metric_id: str, weighted: bool):
    """Return ``f(seed) -> metric value`` for one ensemble member."""
    fn = metrics.MATRIX_METRICS[metric_id]
    if model_id == "weight_shuffle":
        if not g.is_weighted:
            raise NullModelError("nothing to shuffle")
        r, c, w = g._coo
        shape = (g.n_rows, g.n_cols)

        def member(seed):
            perm = np.random.default_rng(seed).permutation(len(w))
            m = np.zeros(shape)
            m[r, c] = w[perm] if weighted else 1.0
            return fn(m)

        return member

    p = pp_probabilities(g.biadjacency(dense=True))
    corrected = model_id == "pp_corrected"

    def member(seed):
        return fn(sample_pp(p, np.random.default_rng(seed), corrected))

    return member


def ensemble(g: BipartiteGraph, metric_id: str, model_id: str, size: int, seed: int = 0,
             weighted: bool | None = None, threads: int = 1) -> NullEnsemble:
    """Metric values on ``size`` random graphs; member ``k`` uses seed ``seed + k``."""
    metric_id = metrics.resolve_metric(metric_id)
    model_id = resolve_model(model_id)
    if weighted is None:
        weighted = model_id == "weight_shuffle"
    member = _member_factory(g, model_id, metric_id, weighted)
    seeds = [seed + k for k in range(size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(member, seeds))
    else:
        values = [member(s) for s in seeds]
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NullModelError("non-finite metric value in null ensemble")
    return NullEnsemble(model_id, metric_id, values, seed)


def significance_from_values(observed: float, values, metric_id: str = "", model_id: str = "",
                             seed: int = 0) -> SignificanceResult:
    """p-value and z-score of ``observed`` against ensemble ``values``.

    Members equal to the observation count as at least as nested.  The
    p-value never drops below ``1 / size``.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        raise ValueError("empty ensemble")
    # ulp-level differences between equal-valued matrices count as ties
    slack = 1e-12 * max(1.0, abs(observed))
    count = int(np.sum(values >= observed - slack))
    p = max(count, 1) / n
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if n > 1 else 0.0
    degenerate = std == 0.0
    if degenerate:
        diff = observed - mean
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        z = (observed - mean) / std
    return SignificanceResult(p, z, float(observed), mean, std, n, metric_id, model_id, seed, degenerate)


def significance(g: BipartiteGraph, metric_id: str, model_id: str, size: int = 1000, seed: int = 0,
                 weighted: bool | None = None, threads: int = 1) -> SignificanceResult:
    """Test ``g`` against a null ensemble of ``size`` members.

    ``weighted`` defaults to true for the weight-shuffle model and false for
    the PP models; NODF and eta-tilde ignore weights either way.
    """
    if size < MIN_ENSEMBLE:
        raise ValueError(f"ensemble size must be >= {MIN_ENSEMBLE}")
    metric_id = metrics.resolve_metric(metric_id)
    model_id = resolve_model(model_id)
    if weighted is None:
        weighted = model_id == "weight_shuffle"
    observed = metrics.METRICS[metric_id](g, weighted=weighted).value
    ens = ensemble(g, metric_id, model_id, size, seed, weighted, threads)
    log.debug("%s/%s: observed %.6g, ensemble mean %.6g", metric_id, model_id, observed, ens.values.mean())
    return significance_from_values(observed, ens.values, metric_id, model_id, seed)
