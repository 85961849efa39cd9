"""Render filled-contour figures from experiment field CSVs.

The input schema is the field-CSV contract of the experiments CLI: columns
``x1, x2, f, df_dx1, df_dx2``, one row per point of a rectangular grid.  A
sibling ``points.csv`` (columns ``x1, x2, y``), if present next to the input
file, supplies the training points drawn as white circles.
"""
import csv
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIELD_VARS = ("f", "df_dx1", "df_dx2")
REQUIRED_COLUMNS = ("x1", "x2") + FIELD_VARS
DERIVATIVE_VARS = ("df_dx1", "df_dx2")


class MissingColumnsError(ValueError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing columns: " + ", ".join(self.missing))


class EmptyCsvError(ValueError):
    pass


@dataclass
class PlotSpec:
    csv_path: str
    var: str
    out_path: str
    points_path: Optional[str] = None       # None: look for sibling points.csv
    scale_window: Optional[tuple] = None    # (vmin, vmax) override
    levels: int = 21
    dpi: int = 100
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.var not in FIELD_VARS:
            raise ValueError(f"var must be one of {FIELD_VARS}, "
                             f"got {self.var!r}")


def _read_table(path, required):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCsvError(f"{path}: no header row")
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumnsError(missing)
        idx = [header.index(c) for c in required]
        rows = [[float(row[i]) for i in idx] for row in reader if row]
    if not rows:
        raise EmptyCsvError(f"{path}: no data rows")
    return np.asarray(rows, float)


def _as_grid(table):
    """Reshape point-list columns into rectangular grids."""
    x1, x2 = table[:, 0], table[:, 1]
    u1, u2 = np.unique(x1), np.unique(x2)
    if u1.size * u2.size != table.shape[0]:
        raise ValueError("CSV rows do not form a rectangular grid")
    order = np.lexsort((x2, x1))
    shape = (u1.size, u2.size)
    fields = {name: table[order, 2 + k].reshape(shape)
              for k, name in enumerate(FIELD_VARS)}
    X1 = x1[order].reshape(shape)
    X2 = x2[order].reshape(shape)
    return X1, X2, fields


def _training_points(spec):
    path = spec.points_path
    if path is None:
        path = os.path.join(os.path.dirname(os.path.abspath(spec.csv_path)),
                            "points.csv")
        if not os.path.exists(path):
            return None
    table = _read_table(path, ("x1", "x2"))
    return table[:, 0], table[:, 1]


def render_contours(spec: PlotSpec) -> str:
    """Write a filled-contour PNG for one field variable; return its path."""
    table = _read_table(spec.csv_path, REQUIRED_COLUMNS)
    X1, X2, fields = _as_grid(table)
    Z = fields[spec.var]

    if spec.scale_window is not None:
        vmin, vmax = spec.scale_window
    elif spec.var in DERIVATIVE_VARS:
        vmax = float(np.max(np.abs(Z))) or 1.0   # symmetric about 0
        vmin = -vmax
    else:
        vmin, vmax = float(Z.min()), float(Z.max())
        if vmin == vmax:
            vmin, vmax = vmin - 0.5, vmax + 0.5

    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    levels = np.linspace(vmin, vmax, spec.levels)
    cmap = "RdBu_r" if spec.var in DERIVATIVE_VARS else "viridis"
    cs = ax.contourf(X1, X2, Z, levels=levels, cmap=cmap, extend="both")
    fig.colorbar(cs, ax=ax)

    pts = _training_points(spec)
    if pts is not None:
        x1, x2 = pts
        inside = ((x1 >= X1.min()) & (x1 <= X1.max())
                  & (x2 >= X2.min()) & (x2 <= X2.max()))
        ax.plot(x1[inside], x2[inside], "o", markerfacecolor="white",
                markeredgecolor="black", markersize=4, linestyle="none")

    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(spec.var)
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=spec.dpi, format="png",
                metadata={"Software": None})
    plt.close(fig)
    return spec.out_path
