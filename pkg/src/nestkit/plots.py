"""SVG figures, each written next to a CSV holding the plotted data."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .linkpred import RocResult  # noqa: E402
from .ranking import OrderedMatrixExport  # noqa: E402

# fixed salt and no date so repeated runs write identical SVG text
_SVG_RC = {"svg.hashsalt": "nestkit", "svg.fonttype": "none"}


def _save(fig, path: Path) -> None:
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def ordered_matrix_csv_rows(export: OrderedMatrixExport) -> list[list]:
    rows = [["row_pos", "col_pos", "row", "col"]]
    rows.extend([i, j, r, c] for i, j, r, c in export.occupied_cells())
    return rows


def curve_csv_rows(export: OrderedMatrixExport) -> list[list]:
    rows = [["class", "position", "node", "degree"]]
    rows.extend(["row", i, n, int(d)] for i, (n, d) in enumerate(zip(export.row_order, export.diversity)))
    rows.extend(["col", j, n, int(d)] for j, (n, d) in enumerate(zip(export.col_order, export.ubiquity)))
    return rows


def plot_ordered_matrix(export: OrderedMatrixExport, path, title: str = "") -> tuple[Path, Path, Path]:
    """Occupied cells as points with the diversity and ubiquity step curves.

    Returns the SVG path and the two CSV twins (cells, curves).
    """
    path = Path(path)
    n_r, n_c = export.matrix.shape
    side = 4.0 + 4.0 * min(1.0, max(n_r, n_c) / 200)
    fig, ax = plt.subplots(figsize=(side, side * max(0.3, n_r / max(n_c, 1))))
    ii, jj = np.nonzero(export.matrix)
    ax.scatter(jj, ii, s=max(0.5, 2000 / max(1, export.matrix.size) ** 0.5), marker="s",
               color="black", linewidths=0)
    ax.step(export.diversity - 0.5, np.arange(n_r), where="mid", color="tab:red", lw=1,
            label="diversity")
    ax.step(np.arange(n_c), export.ubiquity - 0.5, where="mid", color="tab:blue", lw=1,
            label="ubiquity")
    ax.set_xlim(-0.5, n_c - 0.5)
    ax.set_ylim(n_r - 0.5, -0.5)
    ax.set_xlabel("column rank")
    ax.set_ylabel("row rank")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    cells = path.with_name(path.stem + "_cells.csv")
    curves = path.with_name(path.stem + "_curves.csv")
    write_csv(cells, ordered_matrix_csv_rows(export))
    write_csv(curves, curve_csv_rows(export))
    return path, cells, curves


def roc_csv_rows(roc: RocResult) -> list[list]:
    rows = [["step", "fpr", "tpr"]]
    rows.extend([k, repr(float(x)), repr(float(y))] for k, (x, y) in enumerate(roc.points))
    return rows


def plot_roc(roc: RocResult, path, title: str = "") -> tuple[Path, Path]:
    path = Path(path)
    pts = np.asarray(roc.points)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(pts[:, 0], pts[:, 1], color="tab:blue", lw=1.5, label=f"AUC = {roc.auc:.3f}")
    ax.plot([0, 1], [0, 1], color="grey", lw=0.8, ls="--")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)
    twin = path.with_suffix(".csv")
    write_csv(twin, roc_csv_rows(roc))
    return path, twin
