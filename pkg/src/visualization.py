"""
@file visualization.py
@brief Module for rendering samples, vector fields and training curves as SVG.

Scatter frames and field grids are drawn directly with svgwrite so the output
is byte-deterministic; loss curves and sweep summaries go through matplotlib's
SVG backend with dates and hash salts pinned.
"""

from __future__ import annotations

import logging

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import svgwrite  # noqa: E402
from matplotlib import colormaps  # noqa: E402
from matplotlib.colors import to_hex  # noqa: E402

from src.numerics import check_batch  # noqa: E402

logger = logging.getLogger(__name__)

CANVAS = 400
MARKER_RADIUS = 1.2
ARROW_FRACTION = 0.45
FIELD_CMAP = "viridis"

plt.rcParams["svg.hashsalt"] = "bridge-matching"


def _to_canvas(points: np.ndarray, lo: float, hi: float) -> np.ndarray:
    scale = CANVAS / (hi - lo)
    px = (points[:, 0] - lo) * scale
    py = CANVAS - (points[:, 1] - lo) * scale
    return np.stack([px, py], axis=1)


def _drawing(path, title: str | None = None):
    dwg = svgwrite.Drawing(path, size=(CANVAS, CANVAS), viewBox=f"0 0 {CANVAS} {CANVAS}")
    dwg.add(dwg.rect(insert=(0, 0), size=(CANVAS, CANVAS), fill="white", stroke="black", stroke_width=1))
    if title:
        dwg.add(dwg.text(title, insert=(6, 14), font_size=11, font_family="sans-serif"))
    return dwg


def render_scatter(batch, plot_range, path, title: str | None = None, color: str = "#1f4e79"):
    """
    @brief Renders a square scatter plot of a batch as an SVG file.

    One circle is written per point inside the plotting range.

    @param batch (numpy.ndarray): Points (n, 2), n >= 1.
    @param plot_range (tuple): (lo, hi) shared by both axes.
    @param path (str): Output SVG path.
    @param title (str, optional): Caption drawn in the top-left corner.
    @param color (str, optional): Marker fill.

    @return int: Number of markers written.
    """
    batch = check_batch(batch, "batch")
    lo, hi = float(plot_range[0]), float(plot_range[1])
    if not hi > lo:
        raise ValueError(f"plot range must satisfy lo < hi, got {plot_range}")
    inside = np.all((batch >= lo) & (batch <= hi), axis=1)
    if not inside.all():
        logger.debug("%d points fall outside the plotting range", int((~inside).sum()))
    dwg = _drawing(path, title)
    markers = dwg.g(fill=color, stroke="none")
    for cx, cy in _to_canvas(batch[inside], lo, hi):
        markers.add(dwg.circle(center=(round(float(cx), 3), round(float(cy), 3)), r=MARKER_RADIUS))
    dwg.add(markers)
    dwg.save()
    return int(inside.sum())


def render_field(lattice, values, plot_range, path, title: str | None = None):
    """
    @brief Renders a vector field as a magnitude heatmap with direction arrows.

    Each lattice node gets a square cell colored by ||v|| and an arrow whose
    length is proportional to ||v||, the largest arrow spanning ARROW_FRACTION
    of a cell.

    @param lattice (numpy.ndarray): (G*G, 2) node coordinates in 'ij' order.
    @param values (numpy.ndarray): (G*G, 2) field values at the nodes.
    @param plot_range (tuple): (lo, hi) of the lattice.
    @param path (str): Output SVG path.
    """
    lattice = check_batch(lattice, "lattice")
    values = check_batch(values, "values")
    lo, hi = float(plot_range[0]), float(plot_range[1])
    g = int(round(np.sqrt(lattice.shape[0])))
    cell = CANVAS / g
    mag = np.linalg.norm(values, axis=1)
    peak = float(mag.max())
    norm = mag / peak if peak > 0 else np.zeros_like(mag)
    cmap = colormaps[FIELD_CMAP]

    dwg = _drawing(path, title)
    cells = dwg.g(stroke="none")
    arrows = dwg.g(stroke="white", stroke_width=0.8)
    for (cx, cy), level, v, m in zip(_to_canvas(lattice, lo, hi), norm, values, mag):
        cells.add(dwg.rect(insert=(round(cx - cell / 2, 3), round(cy - cell / 2, 3)),
                           size=(round(cell, 3), round(cell, 3)), fill=to_hex(cmap(float(level)))))
        if m <= 0 or peak <= 0:
            continue
        length = ARROW_FRACTION * cell * m / peak
        dx, dy = v[0] / m * length, -v[1] / m * length
        arrows.add(dwg.line(start=(round(cx - dx / 2, 3), round(cy - dy / 2, 3)),
                            end=(round(cx + dx / 2, 3), round(cy + dy / 2, 3))))
        head = (round(cx + dx / 2, 3), round(cy + dy / 2, 3))
        arrows.add(dwg.circle(center=head, r=0.8, fill="white"))
    dwg.add(cells)
    dwg.add(arrows)
    dwg.save()


def _save_figure(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("Plot saved to %s", path)


def plot_training_history(log, path):
    """
    @brief Plots total, transport and osmotic loss against iteration.

    @param log (pandas.DataFrame): Training log as returned by `load_training_log`.
    @param path (str): Output SVG path.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for column, label in (("loss", "total"), ("loss_u", "transport"), ("loss_d", "osmotic")):
        if column in log:
            ax.plot(log["iteration"], log[column], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    if len(log) and (log["loss"] > 0).all():
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    _save_figure(fig, path)


def plot_sweep(table, path):
    """
    @brief Plots MMD^2 and FID_2D against the osmotic weight lambda_d.

    @param table (pandas.DataFrame): Sweep table with lambda_d, mmd2 and fid2d columns.
    """
    fig, (ax_mmd, ax_fid) = plt.subplots(1, 2, figsize=(8, 3.5))
    ax_mmd.plot(table["lambda_d"], table["mmd2"], marker="o")
    ax_mmd.set_xlabel("lambda_d")
    ax_mmd.set_ylabel("MMD^2")
    ax_fid.plot(table["lambda_d"], table["fid2d"], marker="o", color="tab:orange")
    ax_fid.set_xlabel("lambda_d")
    ax_fid.set_ylabel("FID_2D")
    fig.tight_layout()
    _save_figure(fig, path)
