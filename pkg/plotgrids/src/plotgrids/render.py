"""Heatmap panels from stability-grid CSV files.

Input files follow the simulator's grid schema: one row per (beta1, beta2)
cell with columns ``beta1,beta2,avg_backlog,max_excursion,stability,
served_total,failed_ops``. Files are arranged into a panel per (parasitic
load row, policy column); each panel colors cells by average demand backlog
(dark = low/stable, bright = high/unstable), leaves skipped cells white, and
can annotate every cell with its maximum excursion.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LogNorm, Normalize

GRID_NAME = re.compile(r"grid_(?P<policy>.+)_(?P<load>[^_]+)\.csv$")


class GridInputError(ValueError):
    """Raised when the CSV inputs are malformed or mutually inconsistent."""


@dataclass
class GridData:
    """One parsed grid CSV."""

    policy: str
    load: str
    beta1: tuple[float, ...]
    beta2: tuple[float, ...]
    backlog: np.ndarray     # (len(beta1), len(beta2)), NaN on skipped cells
    excursion: np.ndarray
    skipped: np.ndarray     # bool mask
    path: Path


@dataclass
class GridFigureSpec:
    """What to render: CSV paths plus presentation toggles."""

    inputs: list[Path]
    output: Path
    log_scale: bool = False
    annotate_excursion: bool = False
    cmap: str = "viridis"
    cell_inches: float = 2.6
    labels: dict[str, str] = field(default_factory=dict)


def parse_grid_name(path: Path) -> tuple[str, str]:
    match = GRID_NAME.search(path.name)
    if not match:
        raise GridInputError(
            f"{path.name}: expected a grid_<policy>_<load>.csv file name"
        )
    return match.group("policy"), match.group("load")


def load_grid(path: Path) -> GridData:
    policy, load = parse_grid_name(path)
    rows = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        expected = {"beta1", "beta2", "avg_backlog", "max_excursion", "stability"}
        if reader.fieldnames is None or not expected <= set(reader.fieldnames):
            raise GridInputError(f"{path}: missing columns {sorted(expected)}")
        for row in reader:
            rows.append(row)
    if not rows:
        raise GridInputError(f"{path}: no data rows")
    beta1 = tuple(sorted({float(r["beta1"]) for r in rows}))
    beta2 = tuple(sorted({float(r["beta2"]) for r in rows}))
    if len(rows) != len(beta1) * len(beta2):
        raise GridInputError(
            f"{path}: {len(rows)} rows do not fill a {len(beta1)}x{len(beta2)} grid"
        )
    backlog = np.full((len(beta1), len(beta2)), np.nan)
    excursion = np.full_like(backlog, np.nan)
    skipped = np.zeros(backlog.shape, dtype=bool)
    pos1 = {b: i for i, b in enumerate(beta1)}
    pos2 = {b: j for j, b in enumerate(beta2)}
    for row in rows:
        i, j = pos1[float(row["beta1"])], pos2[float(row["beta2"])]
        if row["stability"] == "skipped":
            skipped[i, j] = True
            continue
        backlog[i, j] = float(row["avg_backlog"])
        excursion[i, j] = float(row["max_excursion"])
    return GridData(policy, load, beta1, beta2, backlog, excursion, skipped, path)


def _load_key(load: str) -> float:
    try:
        return float(load)
    except ValueError:
        return math.inf


def render_grid(spec: GridFigureSpec) -> Path:
    """Render the panel figure and write it to ``spec.output``.

    Panels are laid out with one row per parasitic load and one column per
    policy; every panel must carry the identical (beta1, beta2) grid.
    """
    if not spec.inputs:
        raise GridInputError("no input CSV files given")
    grids = [load_grid(Path(p)) for p in spec.inputs]
    reference = grids[0]
    mismatched = [
        str(g.path)
        for g in grids
        if g.beta1 != reference.beta1 or g.beta2 != reference.beta2
    ]
    if mismatched:
        raise GridInputError(
            "input grids disagree on (beta1, beta2) axes: "
            + ", ".join(mismatched)
            + f" vs {reference.path}"
        )

    policies = sorted({g.policy for g in grids})
    loads = sorted({g.load for g in grids}, key=_load_key)
    by_panel = {(g.load, g.policy): g for g in grids}
    if len(by_panel) != len(grids):
        raise GridInputError("duplicate (policy, load) input files")

    finite = np.concatenate([g.backlog[~np.isnan(g.backlog)] for g in grids])
    vmax = float(finite.max()) if finite.size else 1.0
    if spec.log_scale:
        positive = finite[finite > 0]
        vmin = float(positive.min()) if positive.size else 0.1
        norm = LogNorm(vmin=vmin, vmax=max(vmax, vmin * 10))
    else:
        norm = Normalize(vmin=0.0, vmax=max(vmax, 1e-9))

    n_rows, n_cols = len(loads), len(policies)
    fig, axes = plt.subplots(
        n_rows,
        n_cols,
        figsize=(spec.cell_inches * n_cols + 1.2, spec.cell_inches * n_rows + 0.8),
        squeeze=False,
    )
    b1, b2 = reference.beta1, reference.beta2
    extent = _axis_extent(b2) + _axis_extent(b1)  # x = beta2, y = beta1
    cmap = plt.get_cmap(spec.cmap).copy()
    cmap.set_bad("white")

    mappable = None
    for r, load in enumerate(loads):
        for c, policy in enumerate(policies):
            ax = axes[r][c]
            grid = by_panel.get((load, policy))
            if grid is None:
                ax.set_axis_off()
                continue
            values = grid.backlog
            if spec.log_scale:
                values = np.maximum(values, norm.vmin)
            shown = np.ma.masked_invalid(values)
            mappable = ax.imshow(
                shown,
                origin="lower",
                aspect="auto",
                extent=extent,
                cmap=cmap,
                norm=norm,
                interpolation="nearest",
            )
            if spec.annotate_excursion:
                for i, y in enumerate(b1):
                    for j, x in enumerate(b2):
                        if not np.isnan(grid.excursion[i, j]):
                            ax.text(x, y, f"{grid.excursion[i, j]:g}",
                                    ha="center", va="center", fontsize=6, color="w")
            if r == 0:
                ax.set_title(spec.labels.get(policy, policy))
            if r == n_rows - 1:
                ax.set_xlabel("demand rate, pair 2")
            if c == 0:
                ax.set_ylabel(f"parasitic load {load}\ndemand rate, pair 1")
    if mappable is not None:
        fig.colorbar(
            mappable, ax=[ax for row in axes for ax in row],
            label="average demand backlog", shrink=0.85,
        )
    output = Path(spec.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output, dpi=140)
    plt.close(fig)
    return output


def _axis_extent(values: tuple[float, ...]) -> tuple[float, float]:
    if len(values) == 1:
        half = max(abs(values[0]) * 0.5, 0.5)
        return (values[0] - half, values[0] + half)
    first_gap = (values[1] - values[0]) / 2
    last_gap = (values[-1] - values[-2]) / 2
    return (values[0] - first_gap, values[-1] + last_gap)
