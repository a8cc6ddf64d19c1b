"""
@package models
@brief Network and optimizer used for both learned fields.

@details
This package includes:
- The three-hidden-layer SiLU MLP with analytic backpropagation (u_theta and d_phi).
- The AdamW optimizer operating on its parameters.
"""

from .mlp import GradBundle, MlpParams, init_mlp, mlp_backward, mlp_forward, mlp_forward_cached, silu
from .adamw import AdamWState, adamw_step

__all__ = [
    'MlpParams',
    'GradBundle',
    'init_mlp',
    'silu',
    'mlp_forward',
    'mlp_forward_cached',
    'mlp_backward',
    'AdamWState',
    'adamw_step',
]
