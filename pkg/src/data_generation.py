"""
@file data_generation.py
@brief Samplers for the synthetic 2D distributions used as sources and targets.

This module generates the four toy datasets (gaussian, moons, mixture,
checkerboard) on demand from a random stream, and computes the square plotting
range shared by every scatter and field render.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from src.numerics import Batch, Rng, check_batch

logger = logging.getLogger(__name__)

DATASET_KINDS = ("gaussian", "moons", "mixture", "checkerboard")

MIXTURE_MEANS = ((0.0, -2.0), (0.0, 0.0), (2.0, 2.0), (-2.0, 2.0))
MIXTURE_STD = 0.5
MOONS_NOISE = 0.05
CHECKERBOARD_SCALE = 0.45
PLOT_MARGIN = 0.05


@dataclass
class DatasetSpec:
    """
    @brief Which dataset to draw and its parameters.

    @param kind (str): One of gaussian, moons, mixture, checkerboard.
    @param mean (tuple): Gaussian mean.
    @param std (tuple): Gaussian per-axis standard deviation.
    @param noise (float): Moons perturbation std.
    @param means (tuple): Mixture component means.
    @param mixture_std (float): Mixture component std.
    @param scale (float): Checkerboard divisor.
    """
    kind: str = "gaussian"
    mean: tuple[float, float] = (0.0, 0.0)
    std: tuple[float, float] = (1.0, 1.0)
    noise: float = MOONS_NOISE
    means: tuple[tuple[float, float], ...] = field(default=MIXTURE_MEANS)
    mixture_std: float = MIXTURE_STD
    scale: float = CHECKERBOARD_SCALE

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; expected one of {DATASET_KINDS}")
        self.mean = tuple(float(v) for v in self.mean)
        self.std = tuple(float(v) for v in self.std)
        self.means = tuple(tuple(float(v) for v in m) for m in self.means)
        if len(self.mean) != 2 or len(self.std) != 2:
            raise ValueError("gaussian mean and std must have two entries")
        if min(self.std) <= 0 or self.mixture_std <= 0:
            raise ValueError("standard deviations must be strictly positive")
        if self.noise < 0:
            raise ValueError(f"moons noise must be non-negative, got {self.noise}")
        if self.scale <= 0:
            raise ValueError(f"checkerboard scale must be positive, got {self.scale}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = list(self.mean)
        d["std"] = list(self.std)
        d["means"] = [list(m) for m in self.means]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(**d)


def _check_count(b: int):
    if b < 1:
        raise ValueError(f"sample count must be at least 1, got {b}")


def sample_gaussian(rng: Rng, b: int, mean=(0.0, 0.0), std=(1.0, 1.0)) -> Batch:
    """
    @brief Draws b samples from N(mean, diag(std^2)).

    @param rng (Rng): Source stream.
    @param b (int): Number of samples.
    @param mean (tuple, optional): Default (0, 0).
    @param std (tuple, optional): Default (1, 1); entries must be positive.

    @return numpy.ndarray: Samples of shape (b, 2).
    """
    _check_count(b)
    std = np.asarray(std, dtype=np.float64)
    if np.any(std <= 0):
        raise ValueError(f"std must be strictly positive, got {std}")
    return np.asarray(mean, dtype=np.float64) + std * rng.generator.standard_normal((b, 2))


def sample_moons(rng: Rng, b: int, noise: float = MOONS_NOISE) -> Batch:
    """
    @brief Draws b samples from the two interleaving half circles.

    Each row picks an arc with probability 1/2 and an angle psi ~ U[0, pi]: the
    upper arc is (cos psi, sin psi), the lower arc (1 - cos psi, 0.5 - sin psi).
    Isotropic Gaussian noise of std `noise` is then added.

    @param rng (Rng): Source stream.
    @param b (int): Number of samples.
    @param noise (float, optional): Perturbation std. Default is 0.05.

    @return numpy.ndarray: Samples of shape (b, 2).
    """
    _check_count(b)
    if noise < 0:
        raise ValueError(f"noise must be non-negative, got {noise}")
    psi = rng.uniform(0.0, np.pi, b)
    lower = rng.integers(0, 2, b).astype(bool)
    x = np.stack([np.cos(psi), np.sin(psi)], axis=1)
    x[lower] = np.array([1.0, 0.5]) - x[lower]
    if noise > 0:
        x += noise * rng.generator.standard_normal((b, 2))
    return x


def sample_mixture(rng: Rng, b: int, means=MIXTURE_MEANS, std: float = MIXTURE_STD) -> Batch:
    """
    @brief Draws b samples from the equal-weight mixture of isotropic Gaussians.

    @param rng (Rng): Source stream.
    @param b (int): Number of samples.
    @param means (tuple, optional): Component means; defaults to (0,-2), (0,0), (2,2), (-2,2).
    @param std (float, optional): Component std. Default is 0.5.

    @return numpy.ndarray: Samples of shape (b, 2).
    """
    _check_count(b)
    means = np.asarray(means, dtype=np.float64)
    component = rng.integers(0, len(means), b)
    return means[component] + std * rng.generator.standard_normal((b, 2))


def sample_checkerboard(rng: Rng, b: int, scale: float = CHECKERBOARD_SCALE) -> Batch:
    """
    @brief Draws b samples from the 4x4 checkerboard.

    z1 ~ U[-2, 2], z2 = u - 2k + (floor(z1) mod 2) with u ~ U[0, 1] and k in {0, 1};
    the output is (z1, z2) / scale.

    @param rng (Rng): Source stream.
    @param b (int): Number of samples.
    @param scale (float, optional): Divisor. Default is 0.45.

    @return numpy.ndarray: Samples of shape (b, 2).
    """
    _check_count(b)
    z1 = rng.uniform(-2.0, 2.0, b)
    u = rng.uniform(0.0, 1.0, b)
    k = rng.integers(0, 2, b)
    z2 = u - 2.0 * k + np.mod(np.floor(z1), 2.0)
    return np.stack([z1, z2], axis=1) / scale


def sample_dataset(spec: DatasetSpec, rng: Rng, b: int) -> Batch:
    """
    @brief Draws b samples from the dataset described by `spec`.
    """
    if spec.kind == "gaussian":
        return sample_gaussian(rng, b, spec.mean, spec.std)
    if spec.kind == "moons":
        return sample_moons(rng, b, spec.noise)
    if spec.kind == "mixture":
        return sample_mixture(rng, b, spec.means, spec.mixture_std)
    if spec.kind == "checkerboard":
        return sample_checkerboard(rng, b, spec.scale)
    raise ValueError(f"unknown dataset kind {spec.kind!r}")


def plot_range(batches) -> tuple[float, float]:
    """
    @brief Symmetric square plotting range covering every point with a 5% margin.

    @param batches (list): Non-empty list of (n, 2) arrays.

    @return tuple: (lo, hi) used for both axes.
    """
    batches = list(batches)
    if not batches:
        raise ValueError("plot_range needs at least one batch")
    extent = max(float(np.abs(check_batch(b, "batch")).max()) for b in batches)
    half = extent * (1.0 + PLOT_MARGIN)
    if half <= 0.0:
        half = 1.0
    return -half, half
