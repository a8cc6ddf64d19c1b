import numpy as np
import pytest
from scipy.special import softmax

from src.numerics import Rng, Stream, rng_standard_normal
from src.oracle import GaussianEndpoints, analytic_marginal, analytic_score
from src.schedules import trig_schedule
from src.targets import (TargetSpec, build_targets, cbm_diffusion_target, cbm_linear_target, cfm_diffusion_target,
                         cfm_linear_target, default_target_spec, kde_score, mbm_diffusion_target, median_bandwidth,
                         sample_time)


def _batch(seed, b):
    root = Rng(seed)
    x0 = rng_standard_normal(root.split(Stream.SOURCE), b, 2)
    x1 = rng_standard_normal(root.split(Stream.TARGET), b, 2) * 0.5 + np.array([2.0, -1.0])
    t = sample_time(root.split(Stream.TIME), b, 1e-2)
    return root, x0, x1, t


def test_cbm_linear_decomposition():
    spec = default_target_spec("cbm_linear")
    for seed in range(100):
        root, x0, x1, t = _batch(seed, 256)
        eps = rng_standard_normal(root.split(Stream.NOISE), 256, 2)
        batch = cbm_linear_target(x0, x1, t, None, spec, eps=eps)
        sched = spec.path_schedule()
        v = (x1 - x0) + sched.sigma_dot(t[:, None]) * eps
        assert np.abs(batch.u_star + batch.d_star - v).max() < 1e-12


@pytest.mark.parametrize("schedule", ["vp", "trig"])
def test_cbm_diffusion_decomposition(schedule):
    spec = default_target_spec("cbm_diffusion", schedule=schedule)
    sched = spec.path_schedule()
    for seed in range(100):
        _, x0, x1, t = _batch(seed, 256)
        batch = cbm_diffusion_target(x0, x1, t, spec)
        tc = t[:, None]
        v = sched.alpha_dot(tc) * x1 + sched.sigma_dot(tc) * x0
        assert np.abs(batch.u_star + batch.d_star - v).max() < 1e-12


@pytest.mark.parametrize("kind", ["mbm_linear", "mbm_diffusion"])
def test_mbm_decomposition(kind):
    spec = default_target_spec(kind)
    for seed in range(100):
        _, x0, x1, t = _batch(seed, 128)
        batch = build_targets(spec, x0, x1, t)
        if kind == "mbm_linear":
            v = x1 - x0
        else:
            sched = spec.path_schedule()
            v = sched.alpha_dot(t[:, None]) * x1 + sched.sigma_dot(t[:, None]) * x0
        assert np.abs(batch.u_star + batch.d_star - v).max() < 1e-12


def test_cfm_linear_velocity():
    spec = default_target_spec("cfm_linear", sigma_min=0.01)
    _, x0, x1, t = _batch(0, 64)
    batch = cfm_linear_target(x0, x1, t, spec)
    assert np.allclose(batch.u_star, x1 - 0.99 * x0, atol=1e-12)
    assert np.array_equal(batch.d_star, np.zeros_like(x0))
    assert np.allclose(batch.x_t, t[:, None] * x1 + (1.0 - 0.99 * t[:, None]) * x0)


def test_cfm_diffusion_has_no_osmotic_target():
    _, x0, x1, t = _batch(1, 64)
    batch = build_targets(default_target_spec("cfm_diffusion"), x0, x1, t)
    assert np.array_equal(batch.d_star, np.zeros_like(x0))


@pytest.mark.parametrize("schedule", ["vp", "trig"])
def test_cfm_diffusion_velocity_is_the_path_derivative(schedule):
    spec = default_target_spec("cfm_diffusion", schedule=schedule)
    _, x0, x1, _ = _batch(5, 64)
    t = np.random.default_rng(5).uniform(0.1, 0.9, 64)
    h = 1e-5
    ahead = cfm_diffusion_target(x0, x1, t + h, spec).x_t
    behind = cfm_diffusion_target(x0, x1, t - h, spec).x_t
    v = cfm_diffusion_target(x0, x1, t, spec).u_star
    assert np.abs((ahead - behind) / (2.0 * h) - v).max() < 1e-5 * np.abs(v).max()


def test_cbm_linear_osmotic_target_has_zero_mean():
    spec = default_target_spec("cbm_linear")
    n = 100_000
    x0 = np.tile([0.3, -0.7], (n, 1))
    x1 = np.tile([2.0, 1.5], (n, 1))
    t = 0.4
    batch = cbm_linear_target(x0, x1, t, Rng(6).split(Stream.NOISE), spec)
    sig = spec.path_schedule().sigma(t)
    assert np.all(np.abs(batch.d_star.mean(axis=0)) < 3.0 * spec.beta_impl / (sig * np.sqrt(n)))


def test_cbm_linear_osmotic_target():
    spec = default_target_spec("cbm_linear", beta_impl=0.1, sigma_min=0.1)
    root, x0, x1, t = _batch(2, 64)
    eps = rng_standard_normal(root.split(Stream.NOISE), 64, 2)
    batch = cbm_linear_target(x0, x1, t, None, spec, eps=eps)
    sig = spec.path_schedule().sigma(t[:, None])
    assert np.allclose(batch.d_star, -0.1 * eps / sig, rtol=1e-12)


def test_cbm_diffusion_floors_sigma():
    spec = default_target_spec("cbm_diffusion", schedule="trig", beta_impl=0.01, sigma_min=0.05)
    _, x0, x1, _ = _batch(3, 16)
    t = 0.99
    batch = cbm_diffusion_target(x0, x1, t, spec)
    sig = np.cos(0.5 * np.pi * t)
    assert sig < 0.05
    assert np.allclose(batch.d_star, -0.01 * sig * x0 / 0.05 ** 2, rtol=1e-9, atol=1e-15)


def test_cbm_linear_needs_noise_stream():
    _, x0, x1, t = _batch(4, 8)
    with pytest.raises(ValueError):
        build_targets(default_target_spec("cbm_linear"), x0, x1, t)
    batch = build_targets(default_target_spec("cbm_linear"), x0, x1, t, Rng(4).split(Stream.NOISE))
    assert batch.x_t.shape == (8, 2)


def test_kde_score_two_points():
    x = np.array([[0.0, 0.0], [1.0, 2.0]])
    score = kde_score(x, 0.5)
    assert np.allclose(score[0], (x[1] - x[0]) / 0.25)
    assert np.allclose(score[1], (x[0] - x[1]) / 0.25)


def test_kde_score_of_identical_points_is_zero():
    x = np.tile([1.5, -0.5], (7, 1))
    assert np.allclose(kde_score(x, 0.3), 0.0, atol=1e-12)


def test_kde_score_is_chunk_independent():
    x = np.random.default_rng(0).standard_normal((1500, 2))
    h = 0.4
    logits = -((x[:, None, :] - x[None, :, :]) ** 2).sum(-1) / (2 * h * h)
    np.fill_diagonal(logits, -np.inf)
    expected = (softmax(logits, axis=1) @ x - x) / (h * h)
    assert np.allclose(kde_score(x, h), expected, atol=1e-10)


def test_kde_score_quality_on_standard_normal():
    errors = []
    for seed in range(10):
        x = rng_standard_normal(Rng(seed), 4096, 2)
        errors.append(np.mean((kde_score(x, median_bandwidth(x)) + x) ** 2))
    assert np.mean(errors) < 0.5


def test_kde_score_is_translation_equivariant():
    x = np.random.default_rng(7).standard_normal((500, 2))
    shift = np.array([3.7, -12.1])
    assert np.allclose(kde_score(x + shift, 0.4), kde_score(x, 0.4), rtol=0.0, atol=1e-9)


def test_kde_score_scales_inversely_with_the_data():
    x = np.random.default_rng(8).standard_normal((500, 2))
    a = 3.0
    assert np.allclose(kde_score(a * x, a * 0.4), kde_score(x, 0.4) / a, rtol=1e-9, atol=1e-9)


@pytest.fixture(scope="module")
def mbm_midpoint():
    ep = GaussianEndpoints([0.0, 0.0], np.eye(2), [2.0, -1.0], np.eye(2))
    spec = default_target_spec("mbm_diffusion", schedule="trig")
    x0, x1 = ep.sample(Rng(9), 4096)
    batch = mbm_diffusion_target(x0, x1, 0.5, spec)
    return batch.x_t, batch.d_star / spec.beta_impl, analytic_marginal(ep, trig_schedule(), 0.5)


def test_mbm_diffusion_osmotic_target_has_zero_batch_mean(mbm_midpoint):
    _, score, _ = mbm_midpoint
    band = 3.0 * score.std(axis=0) / np.sqrt(score.shape[0])
    assert np.all(np.abs(score.mean(axis=0)) < band)


def test_mbm_diffusion_osmotic_target_tracks_the_marginal_score(mbm_midpoint):
    x_t, score, m = mbm_midpoint
    assert np.mean((score - analytic_score(m, x_t)) ** 2) < 0.5


def test_kde_score_requires_two_points():
    with pytest.raises(ValueError):
        kde_score(np.zeros((1, 2)), 1.0)
    with pytest.raises(ValueError):
        kde_score(np.zeros((3, 2)), 0.0)


def test_median_bandwidth():
    assert median_bandwidth(np.ones((10, 2))) == 1.0
    x = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert median_bandwidth(x) == pytest.approx(5.0 * 2 ** (-1 / 6))


def test_target_spec_validation():
    with pytest.raises(ValueError):
        TargetSpec(kind="unknown")
    with pytest.raises(ValueError):
        TargetSpec(kind="cbm_linear", beta_impl=0.0)
    with pytest.raises(ValueError):
        TargetSpec(kind="cfm_linear", t_eps=0.6)
    spec = default_target_spec("mbm_diffusion", kde_bandwidth="0.25")
    assert spec.kde_bandwidth == 0.25
    assert TargetSpec.from_dict(spec.to_dict()) == spec


def test_default_target_values():
    assert default_target_spec("cbm_diffusion").beta_impl == 0.01
    assert default_target_spec("cbm_diffusion").sigma_min == 0.05
    assert default_target_spec("cbm_linear").beta_impl == 0.1
    assert default_target_spec("cbm_linear").sigma_min == 0.1


def test_sample_time_is_clamped():
    t = sample_time(Rng(0), 10_000, 0.05)
    assert t.min() >= 0.05 and t.max() <= 0.95
