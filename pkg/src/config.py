"""
@file config.py
@brief YAML run configuration: defaults, file values and command-line overrides.

@details
A config file mirrors `RunConfig.to_dict()`:

    seed: 42
    source: {kind: gaussian}
    target_data: {kind: moons}
    target: {kind: cfm_linear}
    train: {batch_size: 4096, iterations: 100000, lr: 0.001, hidden: 512, ...}
    sample: {n: 10000, lambda_u: 1.0, lambda_d: 1.0, method: midpoint, step: 0.01, seed: null, ...}
    eval: {n: 10000, bandwidth_rule: squared, floor_seeds: 20}
    fields: {grid: 45, times: [0.0, 0.25, 0.5, 0.75, 1.0], range_samples: 20000}
    oracle: {...}
    sweep: {lambda_d: [0.0, 0.5, 1.0, 1.5]}

Missing keys take their defaults; a `target` section naming only `kind`
starts from `default_target_spec(kind)`.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import yaml

from src.data_generation import DatasetSpec
from src.export import DEFAULT_FIELD_TIMES, DEFAULT_GRID
from src.metrics import BANDWIDTH_RULES
from src.oracle import OracleConfig
from src.sampling import DEFAULT_RECORD, DEFAULT_STEP, DIRECTIONS, METHODS
from src.targets import TargetSpec, default_target_spec
from src.training import TrainConfig

logger = logging.getLogger(__name__)

TRAIN_KEYS = ("batch_size", "iterations", "lr", "hidden", "lambda_d", "log_interval",
              "weight_decay", "betas", "adam_eps")
SECTIONS = ("seed", "source", "target_data", "target", "train", "sample", "eval", "fields", "oracle", "sweep")


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent configuration."""


@dataclass
class SampleOptions:
    n: int = 10_000
    lambda_u: float = 1.0
    lambda_d: float = 1.0
    method: str = "midpoint"
    step: float = DEFAULT_STEP
    record: int = DEFAULT_RECORD
    direction: str = "forward"
    seed: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown sampling method {self.method!r}; expected one of {METHODS}")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"unknown direction {self.direction!r}; expected one of {DIRECTIONS}")
        if self.n < 1:
            raise ConfigError(f"sample.n must be positive, got {self.n}")
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"sample.seed must be non-negative, got {self.seed}")


@dataclass
class EvalOptions:
    n: int = 10_000
    bandwidth_rule: str = "squared"
    floor_seeds: int = 20

    def __post_init__(self):
        if self.bandwidth_rule not in BANDWIDTH_RULES:
            raise ConfigError(f"unknown bandwidth rule {self.bandwidth_rule!r}; expected one of {BANDWIDTH_RULES}")
        if self.n < 2:
            raise ConfigError(f"eval.n must be at least 2, got {self.n}")


@dataclass
class FieldOptions:
    grid: int = DEFAULT_GRID
    times: tuple[float, ...] = DEFAULT_FIELD_TIMES
    range_samples: int = 20_000

    def __post_init__(self):
        self.times = tuple(float(t) for t in self.times)


@dataclass
class SweepOptions:
    lambda_d: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5)

    def __post_init__(self):
        self.lambda_d = tuple(float(v) for v in self.lambda_d)
        if not self.lambda_d:
            raise ConfigError("sweep.lambda_d must not be empty")


@dataclass
class RunConfig:
    """
    @brief Fully resolved configuration of one command invocation.
    """
    train: TrainConfig = field(default_factory=TrainConfig)
    sample: SampleOptions = field(default_factory=SampleOptions)
    eval: EvalOptions = field(default_factory=EvalOptions)
    fields: FieldOptions = field(default_factory=FieldOptions)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    sweep: SweepOptions = field(default_factory=SweepOptions)

    @property
    def seed(self) -> int:
        return self.train.seed

    @property
    def sample_seed(self) -> int:
        """
        @brief Seed of the sampling and evaluation streams; the training seed unless `sample.seed` is set.

        Only the training seed enters the run id, so a separate sampling seed
        still finds the checkpoint of the training run.
        """
        return self.train.seed if self.sample.seed is None else self.sample.seed

    def to_dict(self) -> dict:
        t = self.train.to_dict()
        return {
            "seed": t.pop("seed"),
            "source": t.pop("source"),
            "target_data": t.pop("target_data"),
            "target": t.pop("target"),
            "train": t,
            "sample": asdict(self.sample),
            "eval": asdict(self.eval),
            "fields": {**asdict(self.fields), "times": list(self.fields.times)},
            "oracle": self.oracle.to_dict(),
            "sweep": {"lambda_d": list(self.sweep.lambda_d)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = d or {}
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            train = dict(d.get("train") or {})
            _reject_unknown("train", train, TRAIN_KEYS)
            train_cfg = TrainConfig(
                source=DatasetSpec.from_dict(d.get("source") or {"kind": "gaussian"}),
                target_data=DatasetSpec.from_dict(d.get("target_data") or {"kind": "moons"}),
                target=_target_spec(d.get("target") or {"kind": "cfm_linear"}),
                seed=int(d.get("seed", 42)),
                **{k: (tuple(v) if k == "betas" else v) for k, v in train.items()},
            )
            return cls(
                train=train_cfg,
                sample=SampleOptions(**_section(d, "sample", SampleOptions)),
                eval=EvalOptions(**_section(d, "eval", EvalOptions)),
                fields=FieldOptions(**_section(d, "fields", FieldOptions)),
                oracle=OracleConfig.from_dict(_section(d, "oracle", OracleConfig)),
                sweep=SweepOptions(**_section(d, "sweep", SweepOptions)),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e


def _reject_unknown(name: str, section: dict, allowed):
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {name}: {sorted(extra)}")


def _section(d: dict, name: str, cls) -> dict:
    section = dict(d.get(name) or {})
    _reject_unknown(name, section, [f.name for f in fields(cls)])
    return section


def _target_spec(section: dict) -> TargetSpec:
    section = dict(section)
    kind = section.pop("kind", "cfm_linear")
    return default_target_spec(kind, **section)


def load_config_file(path) -> dict:
    """
    @brief Reads a YAML config file into a plain dict.

    @throws ConfigError if the file is missing or not a mapping.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return data


def merge(base: dict, override: dict) -> dict:
    """
    @brief Recursive dict merge; values in `override` win.
    """
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(path=None, overrides: dict | None = None) -> RunConfig:
    """
    @brief Defaults < config file < overrides.

    A `target.kind` given in the overrides replaces the file's target section
    so the new kind starts from its own defaults.

    @param path (str, optional): YAML config file.
    @param overrides (dict, optional): Nested values from command-line flags.

    @return RunConfig: Fully explicit configuration.
    """
    data = load_config_file(path) if path else {}
    overrides = overrides or {}
    file_target = data.get("target") or {}
    new_kind = (overrides.get("target") or {}).get("kind")
    if new_kind is not None and new_kind != file_target.get("kind"):
        data = {k: v for k, v in data.items() if k != "target"}
    cfg = RunConfig.from_dict(merge(data, overrides))
    logger.debug("resolved config: %s", cfg.to_dict())
    return cfg


def dump_config(cfg: RunConfig, path):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=True)
