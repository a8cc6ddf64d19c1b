"""
@file targets.py
@brief Target constructions returning (x_t, u*, d*) per mini-batch, and the KDE marginal score.

@details
Six constructions share one interface. Each returns an intermediate sample x_t,
a transport target u* and an osmotic target d*:
- CFM (cfm_linear, cfm_diffusion): u* is the path velocity v*, d* = 0.
- CBM (cbm_linear, cbm_diffusion): d* is beta_impl times a closed-form conditional score.
- MBM (mbm_linear, mbm_diffusion): d* is beta_impl times a leave-one-out KDE
  estimate of the marginal score computed on the batch itself.
For every BM construction u* = v* - d*, so u* + d* recovers v*.

beta_impl already absorbs the factor 1/2 relating d_t to the score; it is
never halved again.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import softmax

from src.numerics import Batch, Rng, TimeBatch, as_time_batch, check_batch, rng_standard_normal
from src.schedules import Schedule, cfm_linear_sigma, make_schedule, tube_sigma

logger = logging.getLogger(__name__)

TARGET_KINDS = ("cfm_linear", "cfm_diffusion", "cbm_linear", "cbm_diffusion", "mbm_linear", "mbm_diffusion")
DIFFUSION_KINDS = ("cfm_diffusion", "cbm_diffusion", "mbm_diffusion")
BM_KINDS = ("cbm_linear", "cbm_diffusion", "mbm_linear", "mbm_diffusion")

KDE_ROW_CHUNK = 1024
MEDIAN_PAIR_LIMIT = 4096


@dataclass
class TargetSpec:
    """
    @brief Configuration of a target construction.

    @param kind (str): One of TARGET_KINDS.
    @param beta_impl (float): Osmotic scale; must be positive for BM kinds.
    @param sigma_min (float): Numerical floor on sigma (or terminal width for cfm_linear).
    @param t_eps (float): Times are clamped to [t_eps, 1 - t_eps].
    @param kde_bandwidth (str or float): "median" or a fixed bandwidth h.
    @param schedule (str): Path schedule for diffusion kinds, "vp" or "trig".
    @param beta_min (float): VP schedule parameter.
    @param beta_max (float): VP schedule parameter.
    """
    kind: str = "cfm_linear"
    beta_impl: float = 0.0
    sigma_min: float = 1e-4
    t_eps: float = 1e-2
    kde_bandwidth: str | float = "median"
    schedule: str = "vp"
    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; expected one of {TARGET_KINDS}")
        if self.kind in BM_KINDS and self.beta_impl <= 0:
            raise ValueError(f"beta_impl must be positive for {self.kind}, got {self.beta_impl}")
        if self.sigma_min <= 0:
            raise ValueError(f"sigma_min must be positive, got {self.sigma_min}")
        if not 0.0 <= self.t_eps < 0.5:
            raise ValueError(f"t_eps must lie in [0, 0.5), got {self.t_eps}")
        if self.schedule not in ("vp", "trig"):
            raise ValueError(f"diffusion schedule must be 'vp' or 'trig', got {self.schedule!r}")
        if isinstance(self.kde_bandwidth, str):
            if self.kde_bandwidth != "median":
                self.kde_bandwidth = float(self.kde_bandwidth)
        if not isinstance(self.kde_bandwidth, str) and self.kde_bandwidth <= 0:
            raise ValueError(f"kde bandwidth must be positive, got {self.kde_bandwidth}")

    def path_schedule(self) -> Schedule:
        """
        @brief The schedule attached to this construction.
        """
        if self.kind in DIFFUSION_KINDS:
            return make_schedule(self.schedule, self.beta_min, self.beta_max)
        if self.kind == "cfm_linear":
            return cfm_linear_sigma(self.sigma_min)
        if self.kind == "cbm_linear":
            return tube_sigma(self.sigma_min)
        raise ValueError("mbm_linear uses the deterministic interpolation (1 - t) x0 + t x1 and has no schedule")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSpec":
        return cls(**d)


def default_target_spec(kind: str, **overrides) -> TargetSpec:
    """
    @brief TargetSpec with the typical values for `kind`.

    Diffusion kinds use beta_impl = 0.01, sigma_min = 0.05; linear BM kinds use
    beta_impl = 0.1, sigma_min = 0.1; CFM kinds have no osmotic target.
    """
    if kind == "cfm_linear":
        base = dict(beta_impl=0.0, sigma_min=1e-4)
    elif kind == "cfm_diffusion":
        base = dict(beta_impl=0.0, sigma_min=0.05)
    elif kind in ("cbm_diffusion", "mbm_diffusion"):
        base = dict(beta_impl=0.01, sigma_min=0.05)
    elif kind in ("cbm_linear", "mbm_linear"):
        base = dict(beta_impl=0.1, sigma_min=0.1)
    else:
        raise ValueError(f"unknown target kind {kind!r}")
    base.update(overrides)
    return TargetSpec(kind=kind, **base)


@dataclass
class TargetBatch:
    """
    @brief Intermediate samples and the two regression targets for one mini-batch.
    """
    x_t: Batch
    u_star: Batch
    d_star: Batch
    t: TimeBatch

    @property
    def v_star(self) -> Batch:
        return self.u_star + self.d_star


def sample_time(rng: Rng, b: int, t_eps: float = 1e-2) -> TimeBatch:
    """
    @brief Draws t ~ U[0, 1] and clamps it to [t_eps, 1 - t_eps].
    """
    return np.clip(rng.uniform(0.0, 1.0, b), t_eps, 1.0 - t_eps)


def _prepare(x0, x1, t):
    x0 = check_batch(x0, "x0")
    x1 = check_batch(x1, "x1")
    if x0.shape != x1.shape:
        raise ValueError(f"x0 and x1 must have the same shape, got {x0.shape} and {x1.shape}")
    t = as_time_batch(t, x0.shape[0])
    return x0, x1, t


def cfm_linear_target(x0: Batch, x1: Batch, t: TimeBatch, spec: TargetSpec) -> TargetBatch:
    """
    @brief Conditional affine interpolation x_t = t x1 + sigma(t) x0 with d* = 0.

    v* = x1 + (sigma_dot / sigma) (x_t - t x1), which equals x1 - (1 - sigma_min) x0.
    """
    x0, x1, t = _prepare(x0, x1, t)
    sched = cfm_linear_sigma(spec.sigma_min)
    tc = t[:, None]
    sig = sched.sigma(tc)
    x_t = tc * x1 + sig * x0
    v = x1 + (sched.sigma_dot(tc) / sig) * (x_t - tc * x1)
    return TargetBatch(x_t, v, np.zeros_like(v), t)


def _diffusion_path(x0, x1, t, sched: Schedule):
    tc = t[:, None]
    alpha = sched.alpha(tc)
    sig = sched.sigma(tc)
    x_t = alpha * x1 + sig * x0
    v = sched.alpha_dot(tc) * x1 + sched.sigma_dot(tc) * x0
    return x_t, v, alpha, sig


def cfm_diffusion_target(x0: Batch, x1: Batch, t: TimeBatch, spec: TargetSpec) -> TargetBatch:
    """
    @brief Affine diffusion path x_t = alpha x1 + sigma x0, v* its time derivative, d* = 0.
    """
    x0, x1, t = _prepare(x0, x1, t)
    x_t, v, _, _ = _diffusion_path(x0, x1, t, spec.path_schedule())
    return TargetBatch(x_t, v, np.zeros_like(v), t)


def cbm_linear_target(x0: Batch, x1: Batch, t: TimeBatch, rng: Rng, spec: TargetSpec, eps: Batch | None = None) -> TargetBatch:
    """
    @brief Stochastic tube around the paired linear path.

    m_t = (1 - t) x0 + t x1, x_t = m_t + sigma(t) eps,
    d* = -beta_impl (x_t - m_t) / sigma^2,
    v* = (x1 - x0) + (sigma_dot / sigma) (x_t - m_t), u* = v* - d*.

    @param eps (numpy.ndarray, optional): Noise to use instead of drawing from `rng`.
    """
    x0, x1, t = _prepare(x0, x1, t)
    if eps is None:
        eps = rng_standard_normal(rng, x0.shape[0], x0.shape[1])
    elif np.shape(eps) != x0.shape:
        raise ValueError(f"eps must have shape {x0.shape}")
    sched = tube_sigma(spec.sigma_min)
    tc = t[:, None]
    sig = sched.sigma(tc)
    m = (1.0 - tc) * x0 + tc * x1
    x_t = m + sig * eps
    offset = x_t - m
    d = -spec.beta_impl * offset / (sig * sig)
    v = (x1 - x0) + (sched.sigma_dot(tc) / sig) * offset
    return TargetBatch(x_t, v - d, d, t)


def cbm_diffusion_target(x0: Batch, x1: Batch, t: TimeBatch, spec: TargetSpec) -> TargetBatch:
    """
    @brief Affine diffusion path split with the closed-form conditional score.

    d* = -beta_impl (x_t - alpha x1) / sigma^2, with sigma floored at sigma_min;
    u* = v* - d*.
    """
    x0, x1, t = _prepare(x0, x1, t)
    x_t, v, alpha, sig = _diffusion_path(x0, x1, t, spec.path_schedule())
    sig_floor = np.maximum(sig, spec.sigma_min)
    d = -spec.beta_impl * (x_t - alpha * x1) / (sig_floor * sig_floor)
    return TargetBatch(x_t, v - d, d, t)


def median_bandwidth(x: Batch) -> float:
    """
    @brief Median pairwise distance scaled by B^(-1/6).

    For batches above MEDIAN_PAIR_LIMIT rows the median is taken over the first
    MEDIAN_PAIR_LIMIT rows. Degenerate batches (all points equal) get h = 1.
    """
    x = check_batch(x, "x", cols=None)
    b = x.shape[0]
    if b < 2:
        raise ValueError("median bandwidth needs at least two points")
    med = float(np.median(pdist(x[:MEDIAN_PAIR_LIMIT])))
    if med <= 0.0:
        return 1.0
    return med * b ** (-1.0 / 6.0)


def resolve_bandwidth(x: Batch, bandwidth) -> float:
    if isinstance(bandwidth, str):
        if bandwidth != "median":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        return median_bandwidth(x)
    return float(bandwidth)


def kde_score(xt: Batch, h: float) -> Batch:
    """
    @brief Leave-one-out Gaussian-kernel estimate of the marginal score.

    score(x_i) = (sum_{j != i} w_ij x_j - x_i) / h^2 with
    w_ij = softmax_{j != i}(-||x_i - x_j||^2 / (2 h^2)).
    Rows are processed in fixed chunks; each row's reduction is independent.

    @param xt (numpy.ndarray): Batch of shape (B, d), B >= 2.
    @param h (float): Bandwidth, > 0.

    @return numpy.ndarray: Scores of shape (B, d).
    """
    xt = check_batch(xt, "xt", cols=None)
    b = xt.shape[0]
    if b < 2:
        raise ValueError("kde_score needs at least two points (leave-one-out)")
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    inv = 1.0 / (2.0 * h * h)
    out = np.empty_like(xt)
    for start in range(0, b, KDE_ROW_CHUNK):
        stop = min(start + KDE_ROW_CHUNK, b)
        logits = -cdist(xt[start:stop], xt, "sqeuclidean") * inv
        rows = np.arange(stop - start)
        logits[rows, rows + start] = -np.inf
        w = softmax(logits, axis=1)
        out[start:stop] = (w @ xt - xt[start:stop]) / (h * h)
    return out


def mbm_linear_target(x0: Batch, x1: Batch, t: TimeBatch, spec: TargetSpec) -> TargetBatch:
    """
    @brief Deterministic linear path with a KDE marginal score as osmotic target.

    x_t = (1 - t) x0 + t x1, v* = x1 - x0, d* = beta_impl * kde_score(x_t, h).
    """
    x0, x1, t = _prepare(x0, x1, t)
    tc = t[:, None]
    x_t = (1.0 - tc) * x0 + tc * x1
    v = x1 - x0
    d = spec.beta_impl * kde_score(x_t, resolve_bandwidth(x_t, spec.kde_bandwidth))
    return TargetBatch(x_t, v - d, d, t)


def mbm_diffusion_target(x0: Batch, x1: Batch, t: TimeBatch, spec: TargetSpec) -> TargetBatch:
    """
    @brief Affine diffusion path with a KDE marginal score as osmotic target.
    """
    x0, x1, t = _prepare(x0, x1, t)
    x_t, v, _, _ = _diffusion_path(x0, x1, t, spec.path_schedule())
    d = spec.beta_impl * kde_score(x_t, resolve_bandwidth(x_t, spec.kde_bandwidth))
    return TargetBatch(x_t, v - d, d, t)


def build_targets(spec: TargetSpec, x0: Batch, x1: Batch, t: TimeBatch, rng: Rng | None = None) -> TargetBatch:
    """
    @brief Dispatches to the construction named by `spec.kind`.

    @param rng (Rng, optional): Noise stream; required by cbm_linear only.
    """
    if spec.kind == "cfm_linear":
        return cfm_linear_target(x0, x1, t, spec)
    if spec.kind == "cfm_diffusion":
        return cfm_diffusion_target(x0, x1, t, spec)
    if spec.kind == "cbm_linear":
        if rng is None:
            raise ValueError("cbm_linear needs a noise stream")
        return cbm_linear_target(x0, x1, t, rng, spec)
    if spec.kind == "cbm_diffusion":
        return cbm_diffusion_target(x0, x1, t, spec)
    if spec.kind == "mbm_linear":
        return mbm_linear_target(x0, x1, t, spec)
    if spec.kind == "mbm_diffusion":
        return mbm_diffusion_target(x0, x1, t, spec)
    raise ValueError(f"unknown target kind {spec.kind!r}")
