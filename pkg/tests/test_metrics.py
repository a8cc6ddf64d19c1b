import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.data_generation import DatasetSpec
from src.metrics import (evaluate_samples, fid_2d, fid_from_moments, median_heuristic, mmd2_rbf, self_noise_floor)


def _samples(seed, n, shift=0.0):
    return np.random.default_rng(seed).standard_normal((n, 2)) + shift


def _naive_mmd2(x, y, sigma2):
    def gram(a, b):
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
        return np.exp(-d2 / (2.0 * sigma2))

    n, m = len(x), len(y)
    kxx = gram(x, x)
    kyy = gram(y, y)
    return ((kxx.sum() - np.trace(kxx)) / (n * (n - 1)) + (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
            - 2.0 * gram(x, y).mean())


def test_mmd2_matches_naive_computation():
    x, y = _samples(0, 500), _samples(1, 400, shift=0.3)
    value, sigma2 = mmd2_rbf(x, y)
    assert abs(value - _naive_mmd2(x, y, sigma2)) < 1e-12


def test_median_heuristic_rules():
    x, y = _samples(2, 50), _samples(3, 60)
    d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    assert median_heuristic(x, y, "squared") == pytest.approx(np.median(d2) / 2.0, rel=1e-12)
    assert median_heuristic(x, y, "distance") == pytest.approx(np.median(np.sqrt(d2)) ** 2, rel=1e-12)
    with pytest.raises(ValueError):
        median_heuristic(x, y, "silverman")


def test_same_distribution_is_near_zero():
    value, _ = mmd2_rbf(_samples(4, 10_000), _samples(5, 10_000))
    assert abs(value) < 1e-3


def test_mmd2_is_symmetric():
    x, y = _samples(6, 300), _samples(7, 200, shift=1.0)
    assert mmd2_rbf(x, y)[0] == pytest.approx(mmd2_rbf(y, x)[0], abs=1e-12)


def test_mmd2_is_translation_invariant():
    x, y = _samples(8, 300), _samples(9, 300, shift=0.5)
    c = np.array([7.0, -3.0])
    assert mmd2_rbf(x + c, y + c)[0] == pytest.approx(mmd2_rbf(x, y)[0], abs=1e-10)


def test_far_apart_sets_with_fixed_bandwidth():
    x, y = _samples(10, 200), _samples(11, 200, shift=50.0)
    value, sigma2 = mmd2_rbf(x, y, sigma2=1.0)
    assert sigma2 == 1.0
    assert value == pytest.approx(_naive_mmd2(x, y, 1.0), rel=1e-12)
    assert 0.0 < value < 2.0


def test_mmd2_errors():
    with pytest.raises(ValueError):
        mmd2_rbf(np.zeros((1, 2)), np.zeros((5, 2)))
    with pytest.raises(ValueError):
        mmd2_rbf(np.zeros((5, 2)), np.zeros((5, 3)))
    with pytest.raises(ValueError):
        mmd2_rbf(_samples(0, 5), _samples(1, 5), sigma2=0.0)
    with pytest.raises(ValueError):
        mmd2_rbf(np.array([[np.inf, 0.0], [0.0, 0.0]]), np.zeros((5, 2)))


def test_fid_identical_and_permuted():
    x = _samples(12, 1000, shift=np.array([1.0, 2.0]))
    assert fid_2d(x, x) < 1e-10
    perm = np.random.default_rng(0).permutation(len(x))
    assert fid_2d(x, x[perm]) < 1e-10


def test_fid_population_formula():
    value = fid_from_moments([0.0, 0.0], np.diag([1.0, 4.0]), [1.0, 1.0], np.diag([4.0, 1.0]))
    assert value == pytest.approx(2.0 + 2.0, rel=1e-12)


def test_fid_of_isotropic_gaussians():
    value = fid_from_moments([0.5, -1.0], 0.25 * np.eye(2), [2.0, 1.0], 2.25 * np.eye(2))
    assert abs(value - (1.5 ** 2 + 2.0 ** 2 + 2 * (0.5 - 1.5) ** 2)) < 1e-10


def test_fid_of_shifted_set_is_squared_shift():
    x = _samples(13, 2000)
    assert fid_2d(x, x + np.array([3.0, 4.0])) == pytest.approx(25.0, abs=1e-9)


@given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.1, max_value=5.0))
def test_fid_is_non_negative(seed, scale):
    x = _samples(seed, 50)
    y = _samples(seed + 1, 40) * scale
    assert fid_2d(x, y) >= 0.0


def test_evaluate_samples_report():
    real, gen = _samples(14, 300), _samples(15, 200, shift=0.2)
    report = evaluate_samples(real, gen, "distance")
    assert report.n_real == 300 and report.n_gen == 200
    assert report.bandwidth_rule == "distance"
    assert report.mmd2 == pytest.approx(mmd2_rbf(real, gen, "distance")[0], abs=1e-15)
    assert set(report.to_dict()) == {"mmd2", "fid2d", "n_real", "n_gen", "bandwidth", "bandwidth_rule"}


def test_self_noise_floor_is_small_and_deterministic():
    spec = DatasetSpec("moons")
    a = self_noise_floor(spec, n=500, seeds=3, seed=1)
    assert a == self_noise_floor(spec, n=500, seeds=3, seed=1)
    assert 0.0 < a < 0.05
    with pytest.raises(ValueError):
        self_noise_floor(spec, n=500, seeds=0)
