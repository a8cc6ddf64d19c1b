import numpy as np
import pytest

from src.models import AdamWState, MlpParams, adamw_step, init_mlp, mlp_backward, mlp_forward, mlp_forward_cached, silu
from src.numerics import Rng


def _inputs(seed, b=5):
    gen = np.random.default_rng(seed)
    return gen.standard_normal((b, 2)), gen.uniform(0.0, 1.0, b), gen.standard_normal((b, 2))


def test_silu_values():
    assert silu(0.0) == 0.0
    assert abs(silu(20.0) - 20.0) < 1e-7
    assert abs(silu(-20.0)) < 1e-7


def test_zero_network_outputs_zero():
    p = MlpParams.zeros(16)
    x, t, _ = _inputs(0)
    assert np.array_equal(mlp_forward(p, x, t), np.zeros((5, 2)))


def test_final_bias_is_constant_output():
    p = MlpParams.zeros(4)
    p.biases[-1][:] = [0.5, -2.0]
    x, t, _ = _inputs(1)
    assert np.array_equal(mlp_forward(p, x, t), np.tile([0.5, -2.0], (5, 1)))


def test_forward_matches_straight_line_chain():
    p = init_mlp(Rng(2), hidden=8)
    x, t, _ = _inputs(2)
    h = np.column_stack([x, t])
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        z = h @ w + b
        h = z / (1.0 + np.exp(-z))
    expected = h @ p.weights[-1] + p.biases[-1]
    assert np.allclose(mlp_forward(p, x, t), expected, atol=1e-12)


def test_forward_accepts_scalar_time():
    p = init_mlp(Rng(3), hidden=8)
    x, _, _ = _inputs(3)
    assert np.array_equal(mlp_forward(p, x, 0.3), mlp_forward(p, x, np.full(5, 0.3)))


def test_forward_rejects_bad_shapes():
    p = init_mlp(Rng(4), hidden=8)
    with pytest.raises(ValueError):
        mlp_forward(p, np.zeros((3, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        mlp_forward(p, np.zeros((3, 2)), np.zeros(4))


def _loss(p, x, t, g):
    return float(np.sum(g * mlp_forward(p, x, t)))


def test_backward_matches_central_differences():
    eps = 1e-5
    for seed in range(20):
        p = init_mlp(Rng(seed), hidden=8)
        x, t, g = _inputs(100 + seed)
        grads = mlp_backward(p, x, t, g)
        for theta, grad in zip(p.arrays(), grads.arrays()):
            numeric = np.zeros_like(theta)
            for idx in np.ndindex(theta.shape):
                old = theta[idx]
                theta[idx] = old + eps
                up = _loss(p, x, t, g)
                theta[idx] = old - eps
                down = _loss(p, x, t, g)
                theta[idx] = old
                numeric[idx] = (up - down) / (2.0 * eps)
            rel = np.linalg.norm(numeric - grad) / max(np.linalg.norm(numeric), np.linalg.norm(grad), 1e-12)
            assert rel < 1e-5


def test_backward_cache_gives_same_gradients():
    p = init_mlp(Rng(9), hidden=8)
    x, t, g = _inputs(9)
    _, cache = mlp_forward_cached(p, x, t)
    with_cache = mlp_backward(p, x, t, g, cache=cache)
    without = mlp_backward(p, x, t, g)
    for a, b in zip(with_cache.arrays(), without.arrays()):
        assert np.array_equal(a, b)


def test_init_bounds_and_zero_biases():
    p = init_mlp(Rng(0), hidden=32)
    for w, b in zip(p.weights, p.biases):
        assert np.all(np.abs(w) <= 1.0 / np.sqrt(w.shape[0]))
        assert np.array_equal(b, np.zeros_like(b))


def test_params_reject_wrong_output_dim():
    p = MlpParams.zeros(4)
    with pytest.raises(ValueError):
        MlpParams(p.weights[:-1] + [np.zeros((4, 3))], p.biases[:-1] + [np.zeros(3)])


def test_adamw_first_step():
    p = init_mlp(Rng(1), hidden=4)
    x, t, g = _inputs(1)
    grads = mlp_backward(p, x, t, g)
    state = AdamWState.create(p, lr=1e-2)
    assert all(np.array_equal(m, np.zeros_like(m)) for m in state.m)
    new_state, new_p = adamw_step(state, p, grads)
    assert new_state.step == 1
    for theta, grad, updated in zip(p.arrays(), grads.arrays(), new_p.arrays()):
        expected = theta - 1e-2 * grad / (np.abs(grad) + 1e-8)
        assert np.allclose(updated, expected, rtol=1e-10, atol=1e-14)
    assert state.step == 0


def test_adamw_decay_with_zero_gradient():
    p = init_mlp(Rng(2), hidden=4)
    zero = mlp_backward(p, *_inputs(2)[:2], np.zeros((5, 2)))
    state = AdamWState.create(p, lr=0.1, weight_decay=0.5)
    _, new_p = adamw_step(state, p, zero)
    for theta, updated in zip(p.arrays(), new_p.arrays()):
        assert np.allclose(updated, theta * (1.0 - 0.1 * 0.5))


def test_adamw_rejects_bad_hyperparameters():
    p = MlpParams.zeros(4)
    with pytest.raises(ValueError):
        AdamWState.create(p, lr=0.0)
    with pytest.raises(ValueError):
        AdamWState.create(p, weight_decay=-1.0)


def test_forward_is_batch_equivariant():
    p = init_mlp(Rng(12), hidden=16)
    x, t, _ = _inputs(12, b=40)
    perm = np.random.default_rng(12).permutation(40)
    assert np.allclose(mlp_forward(p, x[perm], t[perm]), mlp_forward(p, x, t)[perm], rtol=0.0, atol=1e-12)


def test_batch_forward_matches_row_by_row():
    p = init_mlp(Rng(13), hidden=16)
    x, t, _ = _inputs(13, b=25)
    rows = np.concatenate([mlp_forward(p, x[i:i + 1], t[i:i + 1]) for i in range(25)])
    assert np.allclose(mlp_forward(p, x, t), rows, rtol=0.0, atol=1e-12)
