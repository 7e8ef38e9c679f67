"""Link creation/deletion prediction from probit residuals of the nested arrangement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr

from .graph import BipartiteGraph, GraphError, degree_vectors

log = logging.getLogger(__name__)

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
# linear predictor magnitude kept after a separated fit: Phi(8) = 1 - 6e-16
ETA_CLIP = 8.0


class ProbitError(ValueError):
    pass


class RocUndefinedError(ValueError):
    pass


@dataclass(frozen=True)
class ProbitFit:
    coefficients: np.ndarray
    names: tuple[str, ...]
    log_likelihood: float
    converged: bool
    iterations: int
    separated: bool = False
    history: tuple[float, ...] = ()

    @property
    def params(self) -> dict[str, float]:
        return dict(zip(self.names, self.coefficients.tolist()))

    def to_dict(self) -> dict:
        return {
            "coefficients": self.params,
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
            "separated": self.separated,
        }


def probit_loglik(beta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    q = 2.0 * y - 1.0
    return float(np.sum(log_ndtr(q * (x @ beta))))


def _score_parts(beta, x, y):
    q = 2.0 * y - 1.0
    eta = x @ beta
    z = q * eta
    logcdf = log_ndtr(z)
    # inverse Mills ratio phi(z)/Phi(z), evaluated in log space
    lam = q * np.exp(-0.5 * z * z - LOG_SQRT_2PI - logcdf)
    grad = x.T @ lam
    w = lam * (lam + eta)
    hess = -(x.T * w) @ x
    return float(np.sum(logcdf)), grad, hess


def probit_mle(x: np.ndarray, y: np.ndarray, tol: float = 1e-8, max_iter: int = 100):
    """Maximum-likelihood probit coefficients by damped Newton-Raphson.

    Steps are halved until the log-likelihood does not decrease, so the
    accepted sequence is monotone.  Converged when the gradient norm drops
    below ``tol``, or when no step can raise the likelihood and the Newton
    decrement is negligible.  Returns ``(beta, loglik, converged, iterations,
    history)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.min() == y.max():
        raise ProbitError("response is constant")
    beta = np.zeros(x.shape[1])
    ll, grad, hess = _score_parts(beta, x, y)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(grad) <= tol:
            converged = True
            it -= 1
            break
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        decrement = float(grad @ step)
        t = 1.0
        for _ in range(60):
            cand = beta + t * step
            ll_new = probit_loglik(cand, x, y)
            if ll_new >= ll:
                break
            t *= 0.5
        else:
            converged = decrement <= 1e-10 * max(1.0, abs(ll))
            break
        beta = cand
        ll, grad, hess = _score_parts(beta, x, y)
        history.append(ll)
        if abs(decrement) <= 1e-20:
            converged = True
            break
    else:
        converged = np.linalg.norm(grad) <= tol
    return beta, ll, converged, it, tuple(history)


def design_matrix(g: BipartiteGraph, include_intercept: bool = False) -> tuple[np.ndarray, tuple[str, ...]]:
    """Per-cell features ``d(row), d(col), d(row) * d(col)``, rows-major."""
    dr, dc = degree_vectors(g)
    di = np.repeat(dr, g.n_cols)
    dj = np.tile(dc, g.n_rows)
    cols = [di, dj, di * dj]
    names = ["alpha", "beta", "gamma"]
    if include_intercept:
        cols.insert(0, np.ones_like(di))
        names.insert(0, "intercept")
    return np.column_stack(cols), tuple(names)


def fit_probit(g0: BipartiteGraph, include_intercept: bool = False, standardize: bool = False,
               tol: float = 1e-8, max_iter: int = 100) -> ProbitFit:
    """Probit fit of cell occupancy on degree features over every matrix cell.

    ``standardize`` divides each feature by its RMS before fitting (no
    centering), which leaves the model and its fitted probabilities unchanged;
    coefficients are always reported on the raw feature scale.  A perfectly
    separated fit is rescaled so that ``|eta| <= ETA_CLIP`` and reported
    with ``converged=False``.
    """
    x, names = design_matrix(g0, include_intercept)
    y = g0.biadjacency(dense=True).ravel() > 0
    if y.all() or not y.any():
        raise ProbitError("graph has no absent (or no present) cells")
    scale = np.sqrt(np.mean(x * x, axis=0)) if standardize else np.ones(x.shape[1])
    scale[scale == 0] = 1.0
    beta, ll, converged, iters, history = probit_mle(x / scale, y.astype(float), tol, max_iter)
    beta = beta / scale
    eta = x @ beta
    # a separating predictor means no finite maximum exists, even when the
    # gradient has numerically vanished on saturated probabilities
    separated = bool(eta[y].min() > eta[~y].max())
    if separated:
        peak = np.abs(eta).max()
        if peak > ETA_CLIP:
            beta = beta * (ETA_CLIP / peak)
    ll = probit_loglik(beta, x, y.astype(float))
    return ProbitFit(beta, names, ll, bool(converged and not separated), iters, separated, history)


def fitted_probabilities(g0: BipartiteGraph, fit: ProbitFit) -> np.ndarray:
    x, _ = design_matrix(g0, "intercept" in fit.names)
    return ndtr(x @ fit.coefficients).reshape(g0.n_rows, g0.n_cols)


@dataclass(frozen=True)
class PredictionList:
    """Candidate links in prediction order.

    Creation lists hold absent cells by ascending residual (most expected
    first); deletion lists hold present cells by descending residual.
    """

    direction: str
    candidates: list[tuple[str, str, float]]
    excluded: int = 0

    def __len__(self):
        return len(self.candidates)


def residuals(g0: BipartiteGraph, fit: ProbitFit) -> tuple[PredictionList, PredictionList]:
    """Response-scale residuals ``A - Phi(eta)`` split into creation and deletion lists."""
    prob = fitted_probabilities(g0, fit)
    a = g0.biadjacency(dense=True) > 0
    eps = a.astype(float) - prob
    create, delete = [], []
    for i, r in enumerate(g0.row_nodes):
        for j, c in enumerate(g0.col_nodes):
            (delete if a[i, j] else create).append((r, c, float(eps[i, j])))
    create.sort(key=lambda t: (t[2], t[0], t[1]))
    delete.sort(key=lambda t: (-t[2], t[0], t[1]))
    n_present = int(a.sum())
    return (
        PredictionList("creation", create, excluded=n_present),
        PredictionList("deletion", delete, excluded=a.size - n_present),
    )


@dataclass(frozen=True)
class RocResult:
    points: list[tuple[float, float]]
    auc: float
    n_positive: int = 0
    n_negative: int = 0
    labels: list[int] = field(default_factory=list)


def _auc(points) -> float:
    p = np.asarray(points)
    return float(np.sum((p[1:, 0] - p[:-1, 0]) * (p[1:, 1] + p[:-1, 1]) / 2.0))


def roc_from_labels(labels) -> RocResult:
    """ROC of an ordered prediction list, one point after each prediction."""
    labels = np.asarray(labels, dtype=int)
    pos = int(labels.sum())
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise RocUndefinedError("ROC undefined: need at least one positive and one negative")
    tp = np.concatenate([[0], np.cumsum(labels)])
    fp = np.concatenate([[0], np.cumsum(1 - labels)])
    points = list(zip((fp / neg).tolist(), (tp / pos).tolist()))
    return RocResult(points, _auc(points), pos, neg, labels.tolist())


def roc_auc(scores, labels) -> RocResult:
    """ROC of real-valued scores (higher = more likely positive).

    Tied scores are swept together, giving a diagonal segment.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = int(labels.sum())
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise RocUndefinedError("ROC undefined: need at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    s, lab = scores[order], labels[order]
    ends = np.flatnonzero(np.diff(s) != 0).tolist() + [len(s) - 1]
    tp = np.cumsum(lab)[ends]
    fp = np.cumsum(1 - lab)[ends]
    points = [(0.0, 0.0)] + list(zip((fp / neg).tolist(), (tp / pos).tolist()))
    return RocResult(points, _auc(points), pos, neg, lab.tolist())


def event_labels(series, predictions: PredictionList, persist: int = 1) -> list[int]:
    """1 when a candidate's event happens in some later snapshot.

    Creation events need the link present, deletion events need it absent,
    for ``persist`` consecutive snapshots after the first.
    """
    if persist < 1:
        raise ValueError("persist must be >= 1")
    later = [set(g.edges) for g in series.graphs[1:]]
    want_present = predictions.direction == "creation"
    labels = []
    for r, c, _ in predictions.candidates:
        run = best = 0
        for edges in later:
            hit = ((r, c) in edges) == want_present
            run = run + 1 if hit else 0
            best = max(best, run)
        labels.append(int(best >= persist))
    return labels


def evaluate(series, predictions: PredictionList, persist: int = 1) -> RocResult:
    """ROC/AUC of a prediction list against the snapshots after the first."""
    if len(series) < 2:
        raise GraphError("need at least one snapshot after the first")
    return roc_from_labels(event_labels(series, predictions, persist))


def predict(series, direction: str = "creation", include_intercept: bool = False,
            standardize: bool = False, persist: int = 1):
    """Fit on the first snapshot, rank candidates and score them; returns ``(fit, list, roc)``."""
    fit = fit_probit(series.graphs[0], include_intercept, standardize)
    create, delete = residuals(series.graphs[0], fit)
    preds = create if direction in ("creation", "create") else delete
    return fit, preds, evaluate(series, preds, persist)
