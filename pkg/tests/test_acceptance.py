"""
End-to-end runs at reduced scale. These take minutes to hours; run with --runslow.
"""

import numpy as np
import pytest

from main import evaluate_checkpoint, lambda_sweep
from src.config import EvalOptions, SampleOptions
from src.data_generation import DatasetSpec, sample_dataset
from src.metrics import mmd2_rbf, self_noise_floor
from src.numerics import Rng, Stream
from src.oracle import GaussianEndpoints, score_recovery_check
from src.sampling import RecombinedField, integrate
from src.schedules import trig_schedule
from src.targets import default_target_spec
from src.training import TrainConfig, train

pytestmark = pytest.mark.slow

EVAL_N = 10_000


def _reduced(target_data, target, seed=42):
    return TrainConfig(source=DatasetSpec("gaussian"), target_data=target_data, target=target,
                       batch_size=1024, iterations=20_000, hidden=128, seed=seed)


@pytest.fixture(scope="module")
def moons_model():
    return train(_reduced(DatasetSpec("moons"), default_target_spec("cfm_linear")))


def test_cfm_linear_moons_reaches_noise_floor(moons_model):
    report, _ = evaluate_checkpoint(moons_model, 1.0, 0.0, SampleOptions(), EvalOptions(n=EVAL_N))
    floor = self_noise_floor(DatasetSpec("moons"), EVAL_N, 20)
    assert report.mmd2 < 25.0 * floor


def test_training_and_metrics_are_bit_exact(moons_model):
    again = train(_reduced(DatasetSpec("moons"), default_target_spec("cfm_linear")))
    for a, b in zip(moons_model.u_params.arrays() + moons_model.d_params.arrays(),
                    again.u_params.arrays() + again.d_params.arrays()):
        assert np.array_equal(a, b)
    first, _ = evaluate_checkpoint(moons_model, 1.0, 0.0, SampleOptions(), EvalOptions(n=EVAL_N))
    second, _ = evaluate_checkpoint(again, 1.0, 0.0, SampleOptions(), EvalOptions(n=EVAL_N))
    assert first == second


def test_forward_backward_round_trip(moons_model):
    source = sample_dataset(moons_model.config.source, Rng(3).split(Stream.SAMPLING), EVAL_N)
    forward = integrate(RecombinedField(moons_model, 1.0, 0.0), source, "midpoint", 0.01, record=2)
    back = integrate(RecombinedField(moons_model, 1.0, 0.0, "backward"), forward.final, "midpoint", 0.01, record=2)
    fresh = sample_dataset(moons_model.config.source, Rng(3).split(Stream.EVAL), EVAL_N)
    floor = self_noise_floor(moons_model.config.source, EVAL_N, 20)
    assert mmd2_rbf(fresh, back.final)[0] < 10.0 * floor


def test_osmotic_weight_helps_on_mixture():
    gains = []
    for seed in range(5):
        ckpt = train(_reduced(DatasetSpec("mixture"), default_target_spec("cbm_diffusion"), seed=seed))
        table = lambda_sweep(ckpt, [0.0, 0.5, 1.0, 1.5], SampleOptions(), EvalOptions(n=EVAL_N))
        assert len(table) == 4
        gains.append(table.loc[table["lambda_d"] > 0, "mmd2"].min() - table.loc[0, "mmd2"])
    assert np.median(gains) <= 0.0


@pytest.mark.parametrize("t", [0.25, 0.5, 0.75])
def test_score_recovery_at_full_draw_count(t):
    ep = GaussianEndpoints([0.0, 0.0], np.eye(2), [0.08, -0.04], np.diag([1.02, 1.0]))
    result = score_recovery_check(ep, trig_schedule(), t, Rng(11), n_draws=10_000_000)
    assert result.passed
