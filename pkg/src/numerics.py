"""
@file numerics.py
@brief Seeded random streams and small dense linear algebra shared by all modules.

@details
This module provides:
- `Rng`, a splittable wrapper around numpy's PCG64 generator. Sub-streams are
  derived from (seed, stream-id) through `numpy.random.SeedSequence` spawn keys,
  so data sampling, noise, time sampling and initialization never share draws.
- Batch validation used on every public boundary.
- The closed-form square root of a 2x2 symmetric positive semi-definite matrix.

All arithmetic is float64.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from numpy.typing import NDArray

logger = logging.getLogger(__name__)

Batch = NDArray[np.float64]
TimeBatch = NDArray[np.float64]
SymMat2 = NDArray[np.float64]

SYMMETRY_TOL = 1e-12
NEGATIVE_EIG_TOL = 1e-9


class NotPSDError(ValueError):
    """Raised when a matrix expected to be positive semi-definite is not."""


class Stream(IntEnum):
    """
    @brief Stream ids for the independent purposes random numbers are drawn for.
    """
    SOURCE = 0
    TARGET = 1
    TIME = 2
    NOISE = 3
    INIT_U = 4
    INIT_D = 5
    SAMPLING = 6
    EVAL = 7
    PROBE = 8


@dataclass
class Rng:
    """
    @brief Deterministic random stream identified by a seed and a spawn key.

    Two `Rng` objects with the same seed and spawn key produce bit-identical
    draws. `split` derives an independent child stream; children with distinct
    ids do not overlap.

    @param seed (int): 64-bit seed.
    @param spawn_key (tuple): Path of stream ids from the root stream.
    """
    seed: int
    spawn_key: tuple[int, ...] = ()
    _generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=tuple(int(k) for k in self.spawn_key))
        self._generator = np.random.Generator(np.random.PCG64(seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    @property
    def state(self) -> dict:
        """
        @brief Position of the stream, as the JSON-serializable PCG64 state dict.
        """
        return self._generator.bit_generator.state

    @state.setter
    def state(self, value: dict):
        self._generator.bit_generator.state = value

    def split(self, stream_id: int) -> "Rng":
        """
        @brief Returns a fresh, independent child stream.

        @param stream_id (int): Child id, usually a `Stream` member.

        @return Rng: Child stream positioned at its first draw.
        """
        return Rng(self.seed, self.spawn_key + (int(stream_id),))

    def uniform(self, low: float, high: float, size) -> NDArray[np.float64]:
        return self._generator.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._generator.integers(low, high, size)


def rng_standard_normal(rng: Rng, b: int, d: int) -> Batch:
    """
    @brief Draws a b x d batch of i.i.d. standard normal entries.

    @param rng (Rng): Source stream.
    @param b (int): Number of rows, >= 1.
    @param d (int): Number of columns, >= 1.

    @return numpy.ndarray: Array of shape (b, d).
    """
    if b < 1 or d < 1:
        raise ValueError(f"batch shape must be positive, got ({b}, {d})")
    return rng.generator.standard_normal((b, d))


def check_batch(x, name: str = "x", cols: int | None = 2) -> Batch:
    """
    @brief Validates a Batch and returns it as a float64 array.

    @param x (array-like): Candidate batch.
    @param name (str): Argument name used in error messages.
    @param cols (int or None): Required column count, or None to accept any.

    @return numpy.ndarray: The batch as float64.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D batch, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one row")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_time_batch(t, b: int, name: str = "t") -> TimeBatch:
    """
    @brief Broadcasts a scalar time or validates a length-b time vector.
    """
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(b, float(arr))
    arr = arr.reshape(-1)
    if arr.shape[0] != b:
        raise ValueError(f"{name} must have {b} entries, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_symmetric(m, name: str = "m") -> SymMat2:
    arr = np.asarray(m, dtype=np.float64)
    if arr.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2, got shape {arr.shape}")
    if abs(arr[0, 1] - arr[1, 0]) > SYMMETRY_TOL * max(1.0, np.abs(arr).max()):
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (arr + arr.T)


def spd2_sqrt(m) -> SymMat2:
    """
    @brief Principal square root of a 2x2 symmetric positive semi-definite matrix.

    Uses S = (m + sqrt(det m) I) / sqrt(tr m + 2 sqrt(det m)); when the
    denominator vanishes the eigendecomposition is used instead. Eigenvalues in
    [-1e-9, 0) are clamped to zero.

    @param m (numpy.ndarray): Symmetric PSD 2x2 matrix.

    @return numpy.ndarray: S with S @ S == m.

    @throws NotPSDError if m has an eigenvalue below -1e-9.
    """
    m = check_symmetric(m)
    eigvals, eigvecs = np.linalg.eigh(m)
    if eigvals[0] < -NEGATIVE_EIG_TOL:
        raise NotPSDError(f"matrix has negative eigenvalue {eigvals[0]:.3e}")
    if eigvals[0] < 0.0:
        eigvals = np.clip(eigvals, 0.0, None)
        m = (eigvecs * eigvals) @ eigvecs.T

    det = max(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0], 0.0)
    root_det = np.sqrt(det)
    denom = m[0, 0] + m[1, 1] + 2.0 * root_det
    if denom < 1e-12:
        s = (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T
        return 0.5 * (s + s.T)
    s = (m + root_det * np.eye(2)) / np.sqrt(denom)
    return 0.5 * (s + s.T)
