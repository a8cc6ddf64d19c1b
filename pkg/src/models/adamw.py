"""
@file adamw.py
@brief Adam with decoupled weight decay, written against `MlpParams`.

The update is functional: `adamw_step` returns a new state and new
parameters and leaves its arguments untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from src.models.mlp import GradBundle, MlpParams


@dataclass
class AdamWState:
    """
    @brief First and second moments plus hyperparameters.

    @param m (list): First-moment accumulators, one per parameter array.
    @param v (list): Second-moment accumulators.
    @param step (int): Number of updates applied so far.
    @param lr (float): Learning rate.
    @param betas (tuple): (beta1, beta2).
    @param weight_decay (float): Decoupled decay coefficient.
    @param eps (float): Denominator guard.
    """
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    eps: float = 1e-8

    @classmethod
    def create(cls, params: MlpParams, lr: float = 1e-3, betas=(0.9, 0.999),
               weight_decay: float = 0.0, eps: float = 1e-8) -> "AdamWState":
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if weight_decay < 0:
            raise ValueError(f"weight decay must be non-negative, got {weight_decay}")
        arrays = params.arrays()
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            step=0,
            lr=float(lr),
            betas=(float(betas[0]), float(betas[1])),
            weight_decay=float(weight_decay),
            eps=float(eps),
        )


def adamw_step(state: AdamWState, p: MlpParams, g: GradBundle) -> tuple[AdamWState, MlpParams]:
    """
    @brief Applies one AdamW update.

    The parameters are first decayed, theta <- theta * (1 - lr * wd), then moved
    by the bias-corrected Adam direction.

    @param state (AdamWState): Optimizer state before the update.
    @param p (MlpParams): Parameters before the update.
    @param g (GradBundle): Gradients at p.

    @return tuple: (new state, new parameters).
    """
    params = p.arrays()
    grads = g.arrays()
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameters, gradients and optimizer state have different layouts")

    beta1, beta2 = state.betas
    step = state.step + 1
    bias1 = 1.0 - beta1 ** step
    bias2 = 1.0 - beta2 ** step
    decay = 1.0 - state.lr * state.weight_decay

    new_params, new_m, new_v = [], [], []
    for theta, grad, m, v in zip(params, grads, state.m, state.v):
        if theta.shape != grad.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match parameter shape {theta.shape}")
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        new_params.append(theta * decay - state.lr * update)
        new_m.append(m)
        new_v.append(v)

    weights = new_params[0::2]
    biases = new_params[1::2]
    new_state = AdamWState(new_m, new_v, step, state.lr, state.betas, state.weight_decay, state.eps)
    return new_state, MlpParams(weights, biases)
