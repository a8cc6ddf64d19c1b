"""
@file data_loading.py
@brief Module for reading back the files written by `src.export` and the training loop.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from src.sampling import Trajectory


def _read_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def load_samples(path) -> np.ndarray:
    """
    @brief Loads a samples file (columns x, y).

    @param path (str): CSV file written by `export_samples`.

    @return numpy.ndarray: Samples of shape (n, 2).
    """
    frame = _read_csv(path)
    if list(frame.columns) != ["x", "y"]:
        raise ValueError(f"{path} is not a samples file (columns {list(frame.columns)})")
    return frame.to_numpy(dtype=np.float64)


def load_trajectory(path) -> Trajectory:
    """
    @brief Loads a trajectory file, recovering the recorded times from the header.
    """
    frame = _read_csv(path)
    cols = list(frame.columns)
    if len(cols) % 2 or not cols:
        raise ValueError(f"{path} is not a trajectory file")
    times = []
    for cx, cy in zip(cols[0::2], cols[1::2]):
        ax, tx = cx.split("@", 1)
        ay, ty = cy.split("@", 1)
        if ax != "x" or ay != "y" or tx != ty:
            raise ValueError(f"unexpected trajectory header pair {cx!r}, {cy!r}")
        times.append(float(tx))
    values = frame.to_numpy(dtype=np.float64)
    states = [values[:, 2 * k:2 * k + 2].copy() for k in range(len(times))]
    return Trajectory(np.array(times), states)


def load_field_values(path) -> tuple[np.ndarray, np.ndarray]:
    """
    @brief Loads one field value file.

    @return tuple: (lattice (n, 2), values (n, 2)).
    """
    frame = _read_csv(path)
    return frame[["x", "y"]].to_numpy(dtype=np.float64), frame[["fx", "fy"]].to_numpy(dtype=np.float64)


def load_training_log(path) -> pd.DataFrame:
    """
    @brief Loads the line-delimited JSON training log.
    """
    return pd.read_json(path, lines=True)
