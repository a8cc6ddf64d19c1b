"""
@file sampling.py
@brief Recombination of the learned fields and fixed-step ODE integration.

@details
This module includes:
- `RecombinedField`, the sampling-time drift lambda_u * u_theta + lambda_d * d_phi,
  in forward orientation or in the reverse orientation used to run target
  samples back to the source.
- Euler, midpoint and explicit trapezoidal (heun2) integrators on [0, 1] with
  trajectory recording.
- `generate` / `generate_backward`, which draw endpoint samples and integrate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.data_generation import DatasetSpec, sample_dataset
from src.numerics import Batch, Rng, check_batch
from src.training import Checkpoint

logger = logging.getLogger(__name__)

METHODS = ("euler", "midpoint", "heun2")
DIRECTIONS = ("forward", "backward")
DEFAULT_STEP = 0.01
DEFAULT_RECORD = 50

Field = Callable[[Batch, float], Batch]


class IntegrationError(RuntimeError):
    """Raised when the integrated state becomes non-finite."""

    def __init__(self, last_finite_time: float):
        super().__init__(f"state became non-finite after t = {last_finite_time:.6g}")
        self.last_finite_time = last_finite_time


@dataclass(frozen=True)
class RecombinedField:
    """
    @brief Sampling drift built from a checkpoint and two recombination weights.

    @param ckpt (Checkpoint): Trained networks.
    @param lambda_u (float): Transport weight. Default is 1.
    @param lambda_d (float): Osmotic weight. Default is 1.
    @param direction (str): "forward" or "backward".
    """
    ckpt: Checkpoint
    lambda_u: float = 1.0
    lambda_d: float = 1.0
    direction: str = "forward"

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")

    def __call__(self, x: Batch, t) -> Batch:
        if self.direction == "forward":
            return eval_forward(self, x, t)
        return eval_backward(self, x, t)

    def osmotic_part(self, x: Batch, t) -> Batch:
        """@brief The lambda_d * d_phi term at the network time used by this orientation."""
        t_net = t if self.direction == "forward" else 1.0 - np.asarray(t, dtype=np.float64)
        if self.lambda_d == 0.0:
            return np.zeros_like(check_batch(x))
        return self.lambda_d * self.ckpt.d(x, t_net)


def _combine(f: RecombinedField, x: Batch, t_net, sign_u: float) -> Batch:
    out = (sign_u * f.lambda_u) * f.ckpt.u(x, t_net)
    if f.lambda_d != 0.0:
        out = out + f.lambda_d * f.ckpt.d(x, t_net)
    return out


def eval_forward(f: RecombinedField, x: Batch, t) -> Batch:
    """
    @brief lambda_u * u_theta(x, t) + lambda_d * d_phi(x, t).
    """
    if f.direction != "forward":
        raise ValueError("eval_forward needs a forward-oriented field")
    return _combine(f, x, t, 1.0)


def eval_backward(f: RecombinedField, x: Batch, t) -> Batch:
    """
    @brief -lambda_u * u_theta(x, 1 - t) + lambda_d * d_phi(x, 1 - t).

    Integrating this field from tau = 0 to 1 starting at target samples
    runs the learned dynamics in reverse.
    """
    if f.direction != "backward":
        raise ValueError("eval_backward needs a backward-oriented field")
    return _combine(f, x, 1.0 - np.asarray(t, dtype=np.float64), -1.0)


@dataclass
class Trajectory:
    """
    @brief Recorded integration states.

    @param times (numpy.ndarray): Strictly increasing recorded times from 0 to 1.
    @param states (list): One (B, 2) array per recorded time.
    """
    times: np.ndarray
    states: list[Batch]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have the same length")
        if len(self.times) < 1:
            raise ValueError("a trajectory needs at least one state")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        rows = {s.shape for s in self.states}
        if len(rows) != 1:
            raise ValueError(f"all states must share one shape, got {rows}")

    @property
    def final(self) -> Batch:
        return self.states[-1]

    @property
    def n_particles(self) -> int:
        return self.states[0].shape[0]


def step_count(step: float) -> int:
    """
    @brief Number of steps covering [0, 1]; the last step is shortened when step does not divide 1.
    """
    if not 0.0 < step <= 1.0:
        raise ValueError(f"step must lie in (0, 1], got {step}")
    return max(1, math.ceil(round(1.0 / step, 9)))


def time_grid(step: float) -> np.ndarray:
    """
    @brief Integration nodes t_k = min(k * step, 1), k = 0..n, computed from integers.
    """
    n = step_count(step)
    times = np.minimum(np.arange(n + 1, dtype=np.float64) * step, 1.0)
    times[-1] = 1.0
    return times


def record_indices(n_steps: int, record: int) -> np.ndarray:
    """
    @brief Indices of `record` evenly spaced nodes among n_steps + 1, endpoints included.
    """
    if record < 2:
        raise ValueError(f"record must be at least 2, got {record}")
    if record > n_steps + 1:
        raise ValueError(f"cannot record {record} states from {n_steps} steps")
    return np.floor(np.linspace(0.0, n_steps, record) + 0.5).astype(int)


def _euler(f: Field, x, t, h):
    return x + h * f(x, t)


def _midpoint(f: Field, x, t, h):
    k = f(x + 0.5 * h * f(x, t), t + 0.5 * h)
    return x + h * k


def _heun2(f: Field, x, t, h):
    k1 = f(x, t)
    k2 = f(x + h * k1, t + h)
    return x + 0.5 * h * (k1 + k2)


_STEPPERS = {"euler": _euler, "midpoint": _midpoint, "heun2": _heun2}


def integrate(f: Field, x0: Batch, method: str = "midpoint", step: float = DEFAULT_STEP,
              record: int = DEFAULT_RECORD) -> Trajectory:
    """
    @brief Fixed-step integration of dx/dt = f(x, t) from t = 0 to t = 1.

    @param f (callable): Field evaluated as f(x, t) with t a scalar.
    @param x0 (numpy.ndarray): Initial states (B, 2).
    @param method (str): euler, midpoint (default) or heun2.
    @param step (float): Step size. Default is 0.01.
    @param record (int): Number of recorded states including both endpoints. Default is 50.

    @return Trajectory: Recorded states.

    @throws IntegrationError if a state becomes non-finite.
    """
    if method not in _STEPPERS:
        raise ValueError(f"unknown integration method {method!r}; expected one of {METHODS}")
    stepper = _STEPPERS[method]
    x = check_batch(x0, "x0").copy()
    times = time_grid(step)
    n = len(times) - 1
    keep = record_indices(n, record)
    wanted = set(keep.tolist())

    states = [x.copy()] if 0 in wanted else []
    for k in range(n):
        t, h = float(times[k]), float(times[k + 1] - times[k])
        x = stepper(f, x, t, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(t)
        if k + 1 in wanted:
            states.append(x.copy())
    logger.debug("integrated %d particles with %s, %d steps", x.shape[0], method, n)
    return Trajectory(times[keep], states)


def generate_trajectory(ckpt: Checkpoint, source: DatasetSpec, n: int, lambda_u: float = 1.0, lambda_d: float = 1.0,
                        method: str = "midpoint", step: float = DEFAULT_STEP, rng: Rng | None = None,
                        record: int = 2, direction: str = "forward") -> Trajectory:
    """
    @brief Draws n starting points from `source` and integrates the recombined field.

    For direction "backward", `source` is the distribution the reverse run starts
    from, normally the target data.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if rng is None:
        raise ValueError("generation needs a sampling stream")
    field = RecombinedField(ckpt, lambda_u, lambda_d, direction)
    x0 = sample_dataset(source, rng, n)
    return integrate(field, x0, method, step, record)


def generate(ckpt: Checkpoint, source: DatasetSpec, n: int, lambda_u: float = 1.0, lambda_d: float = 1.0,
             method: str = "midpoint", step: float = DEFAULT_STEP, rng: Rng | None = None) -> Batch:
    """
    @brief Terminal states of the forward recombined dynamics started from `source`.

    @return numpy.ndarray: Generated samples (n, 2).
    """
    return generate_trajectory(ckpt, source, n, lambda_u, lambda_d, method, step, rng).final


def generate_backward(ckpt: Checkpoint, target: DatasetSpec, n: int, lambda_u: float = 1.0, lambda_d: float = 1.0,
                      method: str = "midpoint", step: float = DEFAULT_STEP, rng: Rng | None = None) -> Batch:
    """
    @brief Terminal states of the reverse-oriented dynamics started from `target` samples.
    """
    return generate_trajectory(ckpt, target, n, lambda_u, lambda_d, method, step, rng, direction="backward").final


def osmotic_contribution(f: RecombinedField, traj: Trajectory) -> float:
    """
    @brief Mean over recorded states of the row-mean of ||lambda_d * d_phi||.
    """
    norms = [float(np.mean(np.linalg.norm(f.osmotic_part(x, float(t)), axis=1)))
             for x, t in zip(traj.states, traj.times)]
    return float(np.mean(norms))
