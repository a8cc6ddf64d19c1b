import hypothesis
import numpy as np
import pytest

from src.data_generation import DatasetSpec
from src.models import MlpParams
from src.targets import default_target_spec
from src.training import Checkpoint, TrainConfig, init_checkpoint

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=200, deadline=None)
hypothesis.settings.load_profile("fast")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def small_config(**overrides) -> TrainConfig:
    base = dict(
        source=DatasetSpec("gaussian"),
        target_data=DatasetSpec("gaussian", mean=(2.0, -1.0), std=(0.5, 0.5)),
        target=default_target_spec("cbm_diffusion"),
        batch_size=64,
        iterations=20,
        hidden=8,
        log_interval=10,
        seed=3,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def train_config():
    return small_config()


@pytest.fixture
def random_ckpt():
    return init_checkpoint(small_config())


@pytest.fixture
def zero_ckpt():
    cfg = small_config()
    return Checkpoint(MlpParams.zeros(cfg.hidden), MlpParams.zeros(cfg.hidden), cfg, 0)
