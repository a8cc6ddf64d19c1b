"""
@file mlp.py
@brief Three-hidden-layer SiLU network with hand-written backpropagation.

@details
This module includes:
- `MlpParams`, the weights and biases of the chain
  [x, t] -> Linear -> SiLU -> Linear -> SiLU -> Linear -> SiLU -> Linear -> R^2.
- Forward evaluation, a cached forward pass and the analytic backward pass.

The same architecture is used for the transport network u_theta and the
osmotic network d_phi. Weights are stored as (fan_in, fan_out) so a layer is
`h @ W + b`. Time enters as a raw scalar column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from src.numerics import Batch, Rng, TimeBatch, as_time_batch, check_batch

INPUT_DIM = 3
OUTPUT_DIM = 2
NUM_HIDDEN_LAYERS = 3


@dataclass
class MlpParams:
    """
    @brief Parameters of the four affine maps of the network.

    @param weights (list): Four arrays of shape (fan_in, fan_out).
    @param biases (list): Four arrays of shape (fan_out,).
    """
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != NUM_HIDDEN_LAYERS + 1 or len(self.biases) != NUM_HIDDEN_LAYERS + 1:
            raise ValueError("an MLP needs exactly four weight matrices and four bias vectors")
        fan_in = INPUT_DIM
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[0] != fan_in or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i} has inconsistent shapes {w.shape} / {b.shape}")
            fan_in = w.shape[1]
        if fan_in != OUTPUT_DIM:
            raise ValueError(f"output dimension must be {OUTPUT_DIM}, got {fan_in}")

    @property
    def hidden(self) -> int:
        return self.weights[0].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved layer by layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    @classmethod
    def zeros(cls, hidden: int) -> "MlpParams":
        """@brief All-zero network: every input maps to the zero vector."""
        dims = layer_dims(hidden)
        return cls(
            [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
            [np.zeros(b) for b in dims[1:]],
        )


@dataclass
class GradBundle:
    """
    @brief Gradients laid out exactly like `MlpParams`.
    """
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out


def layer_dims(hidden: int) -> list[int]:
    if hidden < 1:
        raise ValueError(f"hidden width must be positive, got {hidden}")
    return [INPUT_DIM] + [hidden] * NUM_HIDDEN_LAYERS + [OUTPUT_DIM]


def init_mlp(rng: Rng, hidden: int = 512) -> MlpParams:
    """
    @brief Initializes weights uniformly on [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.

    @param rng (Rng): Initialization stream.
    @param hidden (int, optional): Hidden width. Default is 512.

    @return MlpParams: Fresh parameters.
    """
    dims = layer_dims(hidden)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def silu(x):
    """
    @brief SiLU activation x * sigmoid(x); accepts scalars and arrays.
    """
    return x * expit(x)


def _silu_grad(z: np.ndarray) -> np.ndarray:
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


def _network_input(x, t) -> np.ndarray:
    x = check_batch(x, "x")
    t = as_time_batch(t, x.shape[0])
    return np.concatenate([x, t[:, None]], axis=1)


def mlp_forward_cached(p: MlpParams, x: Batch, t: TimeBatch):
    """
    @brief Forward pass that also returns the pre-activations needed by `mlp_backward`.

    @return tuple: Output batch (B, 2) and the cache (inputs, pre-activations, activations).
    """
    h = _network_input(x, t)
    inputs = [h]
    pre = []
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w + b
        if i == last:
            return z, (inputs, pre)
        pre.append(z)
        h = silu(z)
        inputs.append(h)
    raise AssertionError("unreachable")


def mlp_forward(p: MlpParams, x: Batch, t: TimeBatch) -> Batch:
    """
    @brief Evaluates the network at (x, t).

    @param p (MlpParams): Network parameters.
    @param x (numpy.ndarray): Positions of shape (B, 2).
    @param t (numpy.ndarray or float): Times of shape (B,), or a scalar for all rows.

    @return numpy.ndarray: Outputs of shape (B, 2).
    """
    out, _ = mlp_forward_cached(p, x, t)
    return out


def mlp_backward(p: MlpParams, x: Batch, t: TimeBatch, out_grad: Batch, cache=None) -> GradBundle:
    """
    @brief Gradient of sum(out_grad * mlp_forward(p, x, t)) with respect to the parameters.

    Nothing is kept between calls; pass the cache from `mlp_forward_cached`
    to skip recomputing the forward pass.

    @param p (MlpParams): Network parameters.
    @param x (numpy.ndarray): Positions of shape (B, 2).
    @param t (numpy.ndarray or float): Times.
    @param out_grad (numpy.ndarray): Cotangent of shape (B, 2).
    @param cache (tuple, optional): Cache returned by `mlp_forward_cached` for the same inputs.

    @return GradBundle: Gradients with the layout of `p`.
    """
    if cache is None:
        _, cache = mlp_forward_cached(p, x, t)
    inputs, pre = cache
    delta = np.asarray(out_grad, dtype=np.float64)
    if delta.shape != (inputs[0].shape[0], OUTPUT_DIM):
        raise ValueError(f"out_grad must have shape {(inputs[0].shape[0], OUTPUT_DIM)}, got {delta.shape}")

    n_layers = len(p.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        grad_w[i] = inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ p.weights[i].T) * _silu_grad(pre[i - 1])
    return GradBundle(grad_w, grad_b)
