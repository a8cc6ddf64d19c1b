"""
@file export.py
@brief Delimited-text dumps of samples, trajectories and field grids.

Every value is written with 17 significant digits so files read back through
`src.data_loading` reproduce the float64 values exactly.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.numerics import Batch, check_batch
from src.sampling import Trajectory
from src.training import Checkpoint
from src.utils import ensure_dir, write_json
from src.visualization import render_field

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
DEFAULT_GRID = 45
DEFAULT_FIELD_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)


def trajectory_columns(times) -> list[str]:
    """
    @brief Header of a trajectory file: x@t, y@t for every recorded time.
    """
    cols = []
    for t in times:
        cols.extend([f"x@{float(t):.17g}", f"y@{float(t):.17g}"])
    return cols


def export_samples(batch: Batch, path):
    """
    @brief Writes one row per sample with columns x, y.
    """
    batch = check_batch(batch, "batch")
    pd.DataFrame(batch, columns=["x", "y"]).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("%d samples written to %s", batch.shape[0], path)


def export_trajectory(traj: Trajectory, path):
    """
    @brief Writes one row per particle and one (x, y) column pair per recorded time.

    @param traj (Trajectory): Recorded states.
    @param path (str): Output CSV path.
    """
    values = np.concatenate(traj.states, axis=1)
    pd.DataFrame(values, columns=trajectory_columns(traj.times)).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("trajectory of %d particles x %d times written to %s", traj.n_particles, len(traj.times), path)


@dataclass
class FieldGrid:
    """
    @brief Learned fields evaluated on a uniform square lattice.

    @param axis (numpy.ndarray): Node coordinates along each axis (G,).
    @param times (numpy.ndarray): Evaluation times (T,).
    @param u (numpy.ndarray): Transport values (T, G*G, 2).
    @param d (numpy.ndarray): Osmotic values (T, G*G, 2).
    """
    axis: np.ndarray
    times: np.ndarray
    u: np.ndarray
    d: np.ndarray

    @property
    def size(self) -> int:
        return len(self.axis)

    @property
    def lattice(self) -> Batch:
        gx, gy = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    @property
    def plot_range(self) -> tuple[float, float]:
        half = 0.5 * (self.axis[1] - self.axis[0])
        return float(self.axis[0] - half), float(self.axis[-1] + half)


def evaluate_field_grid(ckpt: Checkpoint, plot_range, g: int = DEFAULT_GRID, times=DEFAULT_FIELD_TIMES) -> FieldGrid:
    """
    @brief Evaluates u_theta and d_phi at the cell centres of a g x g lattice over the range.
    """
    if g < 2:
        raise ValueError(f"grid size must be at least 2, got {g}")
    lo, hi = float(plot_range[0]), float(plot_range[1])
    if not hi > lo:
        raise ValueError(f"plot range must satisfy lo < hi, got {plot_range}")
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or len(times) < 1 or np.any((times < 0) | (times > 1)):
        raise ValueError("field times must be a non-empty list of values in [0, 1]")
    cell = (hi - lo) / g
    axis = lo + cell * (np.arange(g) + 0.5)
    grid = FieldGrid(axis, times, np.empty((len(times), g * g, 2)), np.empty((len(times), g * g, 2)))
    lattice = grid.lattice
    for k, t in enumerate(times):
        grid.u[k] = ckpt.u(lattice, float(t))
        grid.d[k] = ckpt.d(lattice, float(t))
    return grid


def _write_values(lattice: Batch, values: np.ndarray, path):
    frame = pd.DataFrame(np.concatenate([lattice, values], axis=1), columns=["x", "y", "fx", "fy"])
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def export_field_grid(ckpt: Checkpoint, plot_range, out_dir, g: int = DEFAULT_GRID,
                      times=DEFAULT_FIELD_TIMES, render: bool = True) -> tuple[FieldGrid, list[str]]:
    """
    @brief Evaluates the fields on the lattice and writes per-time value files and renders.

    For every time index k this writes `u_t{k}.csv` and `d_t{k}.csv` (columns
    x, y, fx, fy) and, when `render` is set, `u_t{k}.svg` and `d_t{k}.svg`.
    `index.json` lists the times.

    @return tuple: (FieldGrid, written paths).
    """
    grid = evaluate_field_grid(ckpt, plot_range, g, times)
    ensure_dir(out_dir)
    lattice = grid.lattice
    written = []
    for k, t in enumerate(grid.times):
        for name, values in (("u", grid.u[k]), ("d", grid.d[k])):
            csv_path = os.path.join(out_dir, f"{name}_t{k}.csv")
            _write_values(lattice, values, csv_path)
            written.append(csv_path)
            if render:
                svg_path = os.path.join(out_dir, f"{name}_t{k}.svg")
                render_field(lattice, values, grid.plot_range, svg_path, title=f"{name} at t = {t:g}")
                written.append(svg_path)
    index_path = os.path.join(out_dir, "index.json")
    write_json({"grid": g, "range": list(grid.plot_range), "times": grid.times.tolist()}, index_path)
    written.append(index_path)
    logger.info("field grid %dx%d at %d times written to %s", g, g, len(grid.times), out_dir)
    return grid, written
