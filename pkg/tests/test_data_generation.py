import numpy as np
import pytest
from scipy.stats import kstest

from src.data_generation import (CHECKERBOARD_SCALE, MIXTURE_MEANS, MIXTURE_STD, DatasetSpec, plot_range,
                                 sample_checkerboard, sample_dataset, sample_gaussian, sample_mixture, sample_moons)
from src.numerics import Rng


@pytest.mark.parametrize("kind", ["gaussian", "moons", "mixture", "checkerboard"])
def test_every_dataset_is_deterministic(kind):
    spec = DatasetSpec(kind)
    a = sample_dataset(spec, Rng(4), 500)
    b = sample_dataset(spec, Rng(4), 500)
    assert a.shape == (500, 2)
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_gaussian_moments():
    x = sample_gaussian(Rng(0), 200_000, mean=(1.0, -2.0), std=(0.5, 2.0))
    assert np.allclose(x.mean(axis=0), [1.0, -2.0], atol=0.02)
    assert np.allclose(x.std(axis=0), [0.5, 2.0], atol=0.02)


def test_gaussian_rejects_nonpositive_std():
    with pytest.raises(ValueError):
        sample_gaussian(Rng(0), 10, std=(1.0, 0.0))


def _distance_to_arc(p, center, upper):
    # Half circle of radius 1: y >= center_y for the upper arc, y <= center_y for the lower one.
    rel = p - center
    on_side = rel[:, 1] >= 0 if upper else rel[:, 1] <= 0
    radial = np.abs(np.hypot(rel[:, 0], rel[:, 1]) - 1.0)
    ends = np.minimum(np.hypot(rel[:, 0] - 1.0, rel[:, 1]), np.hypot(rel[:, 0] + 1.0, rel[:, 1]))
    return np.where(on_side, radial, ends)


def _moons_distance(x):
    return np.minimum(_distance_to_arc(x, np.array([0.0, 0.0]), True),
                      _distance_to_arc(x, np.array([1.0, 0.5]), False))


def test_noiseless_moons_lie_on_the_arcs():
    x = sample_moons(Rng(1), 1000, noise=0.0)
    assert _moons_distance(x).max() < 1e-12


def test_moons_arc_balance():
    x = sample_moons(Rng(5), 1_000_000, noise=0.0)
    upper = np.abs(np.hypot(x[:, 0], x[:, 1]) - 1.0) < 1e-9
    assert 0.49 <= upper.mean() <= 0.51


def test_moons_draws_are_independent():
    a = sample_moons(Rng(1), 1000, noise=0.0)
    b = sample_moons(Rng(2), 1000, noise=0.0)
    assert len(np.intersect1d(a[:, 0], b[:, 0])) == 0
    singles = np.concatenate([sample_moons(Rng(s), 1, noise=0.0) for s in range(20)])
    assert len(np.unique(singles, axis=0)) == 20


def test_noisy_moons_stay_near_the_arcs():
    x = sample_moons(Rng(6), 100_000)
    assert _moons_distance(x).max() < 0.3


def test_mixture_mean():
    x = sample_mixture(Rng(2), 100_000)
    assert np.allclose(x.mean(axis=0), [0.0, 0.5], atol=0.05)


def test_mixture_samples_stay_within_seven_sigma():
    x = sample_mixture(Rng(7), 1_000_000)
    means = np.array(MIXTURE_MEANS)
    nearest = np.min(np.linalg.norm(x[:, None, :] - means[None, :, :], axis=2), axis=1)
    assert nearest.max() < 7.0 * MIXTURE_STD


def test_checkerboard_x_marginal_is_uniform():
    x = sample_checkerboard(Rng(8), 1_000_000)
    half = 2.0 / CHECKERBOARD_SCALE
    assert kstest(x[:, 0], "uniform", args=(-half, 2.0 * half)).statistic < 0.01


def test_checkerboard_parity_and_bounds():
    x = sample_checkerboard(Rng(3), 10_000)
    z = x * CHECKERBOARD_SCALE
    assert np.all(np.abs(z) <= 2.0 + 1e-12)
    parity = (np.floor(z[:, 0]) + np.floor(z[:, 1])) % 2
    assert np.all(parity == 0)


def test_sample_count_must_be_positive():
    with pytest.raises(ValueError):
        sample_dataset(DatasetSpec("moons"), Rng(0), 0)


def test_dataset_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        DatasetSpec("spiral")
    spec = DatasetSpec("mixture", mixture_std=0.3)
    assert DatasetSpec.from_dict(spec.to_dict()) == spec


def test_plot_range_is_symmetric_with_margin():
    lo, hi = plot_range([np.array([[1.0, -3.0]]), np.array([[0.5, 2.0]])])
    assert lo == -hi
    assert hi == pytest.approx(3.0 * 1.05)


def test_plot_range_degenerate():
    assert plot_range([np.zeros((4, 2))]) == (-1.0, 1.0)
