"""
@file metrics.py
@brief Distributional metrics for comparing generated and reference 2D samples.

This module provides the unbiased RBF-kernel MMD^2 with a median-heuristic
bandwidth, the Frechet distance between Gaussian fits in the original 2D
coordinates (FID_2D), and the self-noise floor used to calibrate MMD^2 values.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist

from src.data_generation import DatasetSpec, sample_dataset
from src.numerics import Batch, Rng, Stream, check_batch, check_symmetric, spd2_sqrt

logger = logging.getLogger(__name__)

BANDWIDTH_RULES = ("squared", "distance")
KERNEL_ROW_CHUNK = 2048
MEDIAN_PAIR_LIMIT = 25_000_000
FID_NEGATIVE_TOL = 1e-10


@dataclass
class MetricsReport:
    """
    @brief Result of comparing generated samples with reference samples.

    @param mmd2 (float): Unbiased MMD^2 estimate (may be slightly negative).
    @param fid2d (float): Frechet distance of the Gaussian fits, >= 0.
    @param n_real (int): Reference sample count.
    @param n_gen (int): Generated sample count.
    @param bandwidth (float): Kernel sigma^2 actually used.
    @param bandwidth_rule (str): Median-heuristic convention, "squared" or "distance".
    """
    mmd2: float
    fid2d: float
    n_real: int
    n_gen: int
    bandwidth: float
    bandwidth_rule: str = "squared"

    def to_dict(self) -> dict:
        return asdict(self)


def _check_pair(x, y):
    x = check_batch(x, "x", cols=None)
    y = check_batch(y, "y", cols=None)
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError(f"both sample sets need at least two rows, got {x.shape[0]} and {y.shape[0]}")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"sample sets differ in dimension: {x.shape[1]} vs {y.shape[1]}")
    return x, y


def median_heuristic(x: Batch, y: Batch, rule: str = "squared") -> float:
    """
    @brief Kernel sigma^2 from the cross pairwise distances between x and y.

    rule "squared": sigma^2 = median(||x_i - y_j||^2) / 2.
    rule "distance": sigma^2 = median(||x_i - y_j||)^2.
    Above MEDIAN_PAIR_LIMIT pairs a strided subset of x rows is used.

    @return float: sigma^2 > 0.
    """
    if rule not in BANDWIDTH_RULES:
        raise ValueError(f"unknown bandwidth rule {rule!r}; expected one of {BANDWIDTH_RULES}")
    stride = max(1, int(np.ceil(x.shape[0] * y.shape[0] / MEDIAN_PAIR_LIMIT)))
    d2 = cdist(x[::stride], y, "sqeuclidean")
    if rule == "squared":
        sigma2 = float(np.median(d2)) / 2.0
    else:
        sigma2 = float(np.median(np.sqrt(d2))) ** 2
    if sigma2 <= 0.0:
        logger.warning("median heuristic collapsed to zero; using sigma^2 = 1")
        sigma2 = 1.0
    return sigma2


def _kernel_sum(a: Batch, b: Batch, sigma2: float, exclude_diagonal: bool) -> float:
    total = 0.0
    for start in range(0, a.shape[0], KERNEL_ROW_CHUNK):
        stop = min(start + KERNEL_ROW_CHUNK, a.shape[0])
        k = np.exp(-cdist(a[start:stop], b, "sqeuclidean") / (2.0 * sigma2))
        if exclude_diagonal:
            rows = np.arange(stop - start)
            k[rows, rows + start] = 0.0
        total += float(k.sum())
    return total


def mmd2_rbf(x: Batch, y: Batch, bandwidth_rule: str = "squared", sigma2: float | None = None):
    """
    @brief Unbiased MMD^2 with the Gaussian kernel exp(-||a - b||^2 / (2 sigma^2)).

    @param x (numpy.ndarray): Reference samples (n, d), n >= 2.
    @param y (numpy.ndarray): Generated samples (m, d), m >= 2.
    @param bandwidth_rule (str, optional): "squared" (default) or "distance".
    @param sigma2 (float, optional): Fixed sigma^2 overriding the median heuristic.

    @return tuple: (MMD^2 estimate, sigma^2 used).
    """
    x, y = _check_pair(x, y)
    if sigma2 is None:
        sigma2 = median_heuristic(x, y, bandwidth_rule)
    elif sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    n, m = x.shape[0], y.shape[0]
    kxx = _kernel_sum(x, x, sigma2, exclude_diagonal=True) / (n * (n - 1))
    kyy = _kernel_sum(y, y, sigma2, exclude_diagonal=True) / (m * (m - 1))
    kxy = _kernel_sum(x, y, sigma2, exclude_diagonal=False) / (n * m)
    return kxx + kyy - 2.0 * kxy, sigma2


def fid_from_moments(mu_r, cov_r, mu_g, cov_g) -> float:
    """
    @brief Frechet distance between N(mu_r, cov_r) and N(mu_g, cov_g) in 2D.

    ||mu_r - mu_g||^2 + tr(cov_r + cov_g - 2 (cov_r^1/2 cov_g cov_r^1/2)^1/2).
    """
    mu_r = np.asarray(mu_r, dtype=np.float64)
    mu_g = np.asarray(mu_g, dtype=np.float64)
    cov_r = check_symmetric(cov_r, "cov_r")
    cov_g = check_symmetric(cov_g, "cov_g")
    root_r = spd2_sqrt(cov_r)
    inner = root_r @ cov_g @ root_r
    cross = spd2_sqrt(0.5 * (inner + inner.T))
    diff = mu_r - mu_g
    value = float(diff @ diff + np.trace(cov_r + cov_g - 2.0 * cross))
    if value < -FID_NEGATIVE_TOL:
        logger.warning("FID_2D came out negative (%.3e); clamping to zero", value)
    return max(value, 0.0)


def fid_2d(x: Batch, y: Batch) -> float:
    """
    @brief Frechet distance of the empirical Gaussian fits (unbiased covariances).

    @param x (numpy.ndarray): Reference samples (n, 2).
    @param y (numpy.ndarray): Generated samples (m, 2).

    @return float: FID_2D >= 0.
    """
    x, y = _check_pair(x, y)
    return fid_from_moments(x.mean(axis=0), np.cov(x, rowvar=False), y.mean(axis=0), np.cov(y, rowvar=False))


def evaluate_samples(real: Batch, gen: Batch, bandwidth_rule: str = "squared") -> MetricsReport:
    """
    @brief MMD^2 and FID_2D of generated samples against reference samples.
    """
    real, gen = _check_pair(real, gen)
    mmd2, sigma2 = mmd2_rbf(real, gen, bandwidth_rule)
    report = MetricsReport(mmd2, fid_2d(real, gen), real.shape[0], gen.shape[0], sigma2, bandwidth_rule)
    logger.info("MMD^2 %.6g (sigma^2 %.4g), FID_2D %.6g", report.mmd2, sigma2, report.fid2d)
    return report


def self_noise_floor(spec: DatasetSpec, n: int = 10_000, seeds: int = 20, seed: int = 0,
                     bandwidth_rule: str = "squared") -> float:
    """
    @brief Mean |MMD^2| between two independent draws of the same distribution.

    @param spec (DatasetSpec): Distribution to calibrate.
    @param n (int, optional): Samples per draw. Default is 10,000.
    @param seeds (int, optional): Number of independent repetitions. Default is 20.
    @param seed (int, optional): Root seed of the EVAL stream.

    @return float: The floor.
    """
    if seeds < 1:
        raise ValueError(f"seeds must be at least 1, got {seeds}")
    root = Rng(seed).split(Stream.EVAL)
    values = []
    for i in range(seeds):
        rep = root.split(i)
        a = sample_dataset(spec, rep.split(0), n)
        b = sample_dataset(spec, rep.split(1), n)
        values.append(abs(mmd2_rbf(a, b, bandwidth_rule)[0]))
    floor = float(np.mean(values))
    logger.info("self-noise floor for %s: %.3e over %d repetitions", spec.kind, floor, seeds)
    return floor
