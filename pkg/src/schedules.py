"""
@file schedules.py
@brief Scalar probability-path schedules (alpha(t), sigma(t)) and their time derivatives.

@details
Paths are written x_t = alpha(t) x_1 + sigma(t) x_0 with t = 0 at the source
(noise) end and t = 1 at the data end. Four families are provided:
- `vp`: variance preserving, linear beta law in reversed time s = 1 - t.
- `trig`: alpha = sin(pi t / 2), sigma = cos(pi t / 2).
- `cfm_linear`: alpha = t, sigma = 1 - (1 - sigma_min) t.
- `tube`: sigma = max(sqrt(t (1 - t)), sigma_min) around a linear mean path.

All methods accept scalars or numpy arrays. sigma vanishes at t = 1 for vp and
trig; callers clamp t to [t_eps, 1 - t_eps] before dividing by sigma.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

SCHEDULE_KINDS = ("vp", "trig", "cfm_linear", "tube")


class Schedule(ABC):
    """
    @brief A differentiable pair (alpha(t), sigma(t)).
    """
    kind: str = ""

    @abstractmethod
    def alpha(self, t):
        ...

    @abstractmethod
    def sigma(self, t):
        ...

    @abstractmethod
    def alpha_dot(self, t):
        ...

    @abstractmethod
    def sigma_dot(self, t):
        ...


@dataclass(frozen=True)
class VPSchedule(Schedule):
    beta_min: float = 0.1
    beta_max: float = 20.0
    kind: str = "vp"

    def _integral(self, s):
        return self.beta_min * s + 0.5 * (self.beta_max - self.beta_min) * s * s

    def beta(self, s):
        return self.beta_min + (self.beta_max - self.beta_min) * s

    def alpha(self, t):
        s = 1.0 - np.asarray(t, dtype=np.float64)
        return np.exp(-0.5 * self._integral(s))

    def sigma(self, t):
        a = self.alpha(t)
        return np.sqrt(np.clip(1.0 - a * a, 0.0, None))

    def alpha_dot(self, t):
        s = 1.0 - np.asarray(t, dtype=np.float64)
        return 0.5 * self.beta(s) * self.alpha(t)

    def sigma_dot(self, t):
        a = self.alpha(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -a * self.alpha_dot(t) / self.sigma(t)


@dataclass(frozen=True)
class TrigSchedule(Schedule):
    kind: str = "trig"

    def alpha(self, t):
        return np.sin(0.5 * np.pi * np.asarray(t, dtype=np.float64))

    def sigma(self, t):
        return np.cos(0.5 * np.pi * np.asarray(t, dtype=np.float64))

    def alpha_dot(self, t):
        return 0.5 * np.pi * np.cos(0.5 * np.pi * np.asarray(t, dtype=np.float64))

    def sigma_dot(self, t):
        return -0.5 * np.pi * np.sin(0.5 * np.pi * np.asarray(t, dtype=np.float64))


@dataclass(frozen=True)
class LinearSigmaSchedule(Schedule):
    sigma_min: float = 1e-4
    kind: str = "cfm_linear"

    def alpha(self, t):
        return np.asarray(t, dtype=np.float64) * 1.0

    def sigma(self, t):
        return 1.0 - (1.0 - self.sigma_min) * np.asarray(t, dtype=np.float64)

    def alpha_dot(self, t):
        return np.ones_like(np.asarray(t, dtype=np.float64))

    def sigma_dot(self, t):
        return np.full_like(np.asarray(t, dtype=np.float64), -(1.0 - self.sigma_min))


@dataclass(frozen=True)
class TubeSchedule(Schedule):
    """
    @brief Brownian-bridge-shaped tube width with a numerical floor.

    alpha(t) = t describes the mean path weight on x_1; sigma is floored at
    sigma_min and its derivative is zero wherever the floor is active.
    """
    sigma_min: float = 0.1
    kind: str = "tube"

    def alpha(self, t):
        return np.asarray(t, dtype=np.float64) * 1.0

    def alpha_dot(self, t):
        return np.ones_like(np.asarray(t, dtype=np.float64))

    def _raw(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.sqrt(np.clip(t * (1.0 - t), 0.0, None))

    def sigma(self, t):
        return np.maximum(self._raw(t), self.sigma_min)

    def sigma_dot(self, t):
        t = np.asarray(t, dtype=np.float64)
        raw = self._raw(t)
        floored = raw <= self.sigma_min
        with np.errstate(divide="ignore", invalid="ignore"):
            d = (1.0 - 2.0 * t) / (2.0 * raw)
        return np.where(floored, 0.0, d)


def vp_schedule(beta_min: float = 0.1, beta_max: float = 20.0) -> VPSchedule:
    """
    @brief Variance-preserving schedule with linear beta law in reversed time.

    With s = 1 - t and T(s) = beta_min s + (beta_max - beta_min) s^2 / 2:
    alpha(t) = exp(-T(s) / 2), sigma(t) = sqrt(1 - alpha(t)^2).

    @param beta_min (float, optional): Default is 0.1.
    @param beta_max (float, optional): Default is 20.0.

    @return VPSchedule
    """
    if not 0.0 < beta_min < beta_max:
        raise ValueError(f"need 0 < beta_min < beta_max, got {beta_min}, {beta_max}")
    return VPSchedule(float(beta_min), float(beta_max))


def trig_schedule() -> TrigSchedule:
    return TrigSchedule()


def cfm_linear_sigma(sigma_min: float) -> LinearSigmaSchedule:
    """
    @brief Linear conditional path: alpha(t) = t, sigma(t) = 1 - (1 - sigma_min) t.

    @param sigma_min (float): Terminal width, 0 < sigma_min < 1.
    """
    if not 0.0 < sigma_min < 1.0:
        raise ValueError(f"need 0 < sigma_min < 1, got {sigma_min}")
    return LinearSigmaSchedule(float(sigma_min))


def tube_sigma(sigma_min: float) -> TubeSchedule:
    """
    @brief Tube width sqrt(t (1 - t)) floored at sigma_min.

    @param sigma_min (float): Floor, > 0 (typical value 0.1).
    """
    if sigma_min <= 0.0:
        raise ValueError(f"sigma_min must be positive, got {sigma_min}")
    return TubeSchedule(float(sigma_min))


def make_schedule(kind: str, beta_min: float = 0.1, beta_max: float = 20.0, sigma_min: float = 0.1) -> Schedule:
    """
    @brief Builds a schedule from its config keys (`schedule.kind`, `beta_min`, `beta_max`, `sigma_min`).
    """
    if kind == "vp":
        return vp_schedule(beta_min, beta_max)
    if kind == "trig":
        return trig_schedule()
    if kind == "cfm_linear":
        return cfm_linear_sigma(sigma_min)
    if kind == "tube":
        return tube_sigma(sigma_min)
    raise ValueError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")
