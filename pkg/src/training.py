"""
@file training.py
@brief Bridge Matching training loop: loss, iterations, diagnostics.

This module trains the transport network u_theta and the osmotic network d_phi
as two separate MLPs regressed onto the targets of `src.targets`, with one
AdamW optimizer per network. Progress is logged every `log_interval`
iterations and optionally appended to a line-delimited JSON file.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from src.data_generation import DatasetSpec, sample_dataset
from src.models import AdamWState, MlpParams, adamw_step, init_mlp, mlp_backward, mlp_forward, mlp_forward_cached
from src.numerics import Batch, Rng, Stream, TimeBatch, check_batch
from src.targets import TargetSpec, build_targets, default_target_spec, sample_time

logger = logging.getLogger(__name__)

RATIO_EPS = 1e-8
PROBE_SIZE = 4096
TRAIN_STREAMS = (Stream.SOURCE, Stream.TARGET, Stream.TIME, Stream.NOISE)
RESUME_FREE_KEYS = ("iterations", "log_interval")


class TrainingDivergedError(RuntimeError):
    """Raised when the loss becomes non-finite."""

    def __init__(self, iteration: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


@dataclass
class TrainConfig:
    """
    @brief Full training configuration.

    @param source (DatasetSpec): Source distribution pi_0.
    @param target_data (DatasetSpec): Target distribution pi_1.
    @param target (TargetSpec): Target construction.
    @param batch_size (int): Default is 4096.
    @param iterations (int): Default is 100000.
    @param lr (float): Default is 1e-3.
    @param hidden (int): Hidden width. Default is 512.
    @param lambda_d (float): Osmotic loss weight. Default is 1.0.
    @param seed (int): Default is 42.
    @param log_interval (int): Default is 2000.
    @param weight_decay (float): AdamW decay. Default is 0.
    @param betas (tuple): AdamW betas. Default is (0.9, 0.999).
    @param adam_eps (float): AdamW eps. Default is 1e-8.
    """
    source: DatasetSpec = field(default_factory=lambda: DatasetSpec("gaussian"))
    target_data: DatasetSpec = field(default_factory=lambda: DatasetSpec("moons"))
    target: TargetSpec = field(default_factory=lambda: default_target_spec("cfm_linear"))
    batch_size: int = 4096
    iterations: int = 100000
    lr: float = 1e-3
    hidden: int = 512
    lambda_d: float = 1.0
    seed: int = 42
    log_interval: int = 2000
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("batch_size", "hidden", "log_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be non-negative, got {self.iterations}")
        if self.lambda_d < 0:
            raise ValueError(f"lambda_d must be non-negative, got {self.lambda_d}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.target.kind.startswith("mbm") and self.batch_size < 2:
            raise ValueError("KDE targets need batch_size >= 2")
        self.betas = (float(self.betas[0]), float(self.betas[1]))

    def to_dict(self) -> dict:
        return {
            "source": self.source.to_dict(),
            "target_data": self.target_data.to_dict(),
            "target": self.target.to_dict(),
            "batch_size": self.batch_size,
            "iterations": self.iterations,
            "lr": self.lr,
            "hidden": self.hidden,
            "lambda_d": self.lambda_d,
            "seed": self.seed,
            "log_interval": self.log_interval,
            "weight_decay": self.weight_decay,
            "betas": list(self.betas),
            "adam_eps": self.adam_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["source"] = DatasetSpec.from_dict(d["source"])
        d["target_data"] = DatasetSpec.from_dict(d["target_data"])
        d["target"] = TargetSpec.from_dict(d["target"])
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


@dataclass
class Checkpoint:
    """
    @brief Trained parameters of both networks with the configuration that produced them.

    `u_opt`, `d_opt` and `streams` hold the optimizer moments and the positions of
    the training streams after the last iteration; `train(init=...)` continues
    from them so that resuming reproduces an uninterrupted run.
    """
    u_params: MlpParams
    d_params: MlpParams
    config: TrainConfig
    iteration: int = 0
    u_opt: AdamWState | None = field(default=None, compare=False, repr=False)
    d_opt: AdamWState | None = field(default=None, compare=False, repr=False)
    streams: dict | None = field(default=None, compare=False, repr=False)

    def u(self, x: Batch, t) -> Batch:
        return mlp_forward(self.u_params, x, t)

    def d(self, x: Batch, t) -> Batch:
        return mlp_forward(self.d_params, x, t)


def init_checkpoint(cfg: TrainConfig) -> Checkpoint:
    """
    @brief Freshly initialized networks for `cfg`, drawn from the INIT_U / INIT_D streams.
    """
    root = Rng(cfg.seed)
    return Checkpoint(
        u_params=init_mlp(root.split(Stream.INIT_U), cfg.hidden),
        d_params=init_mlp(root.split(Stream.INIT_D), cfg.hidden),
        config=cfg,
        iteration=0,
    )


def compute_bm_loss(u_pred: Batch, d_pred: Batch, u_star: Batch, d_star: Batch, lambda_d: float):
    """
    @brief Bridge Matching regression loss and its cotangents.

    loss = mean ||u_pred - u*||^2 + lambda_d * mean ||d_pred - d*||^2, the mean
    taken over rows of squared Euclidean norms.

    @return tuple: (loss, cotangent for u_pred, cotangent for d_pred).
    """
    shapes = {np.shape(u_pred), np.shape(d_pred), np.shape(u_star), np.shape(d_star)}
    if len(shapes) != 1:
        raise ValueError(f"prediction and target shapes differ: {shapes}")
    b = np.shape(u_pred)[0]
    du = u_pred - u_star
    dd = d_pred - d_star
    loss_u = float(np.sum(du * du)) / b
    loss_d = float(np.sum(dd * dd)) / b
    loss = loss_u + lambda_d * loss_d
    return loss, 2.0 * du / b, 2.0 * lambda_d * dd / b


def _mean_norm(x: Batch) -> float:
    return float(np.mean(np.linalg.norm(x, axis=1)))


def field_magnitude_stats(ckpt: Checkpoint, probe: Batch, t: TimeBatch):
    """
    @brief Relative magnitude of the learned components on a probe batch.

    @return tuple: (E||u||, E||d||, E||d|| / (E||u|| + 1e-8)).
    """
    probe = check_batch(probe, "probe")
    mean_u = _mean_norm(ckpt.u(probe, t))
    mean_d = _mean_norm(ckpt.d(probe, t))
    return mean_u, mean_d, mean_d / (mean_u + RATIO_EPS)


def probe_batch(cfg: TrainConfig, n: int = PROBE_SIZE):
    """
    @brief Held-out intermediate samples (x_t, t) drawn from the PROBE stream.
    """
    probe_rng = Rng(cfg.seed).split(Stream.PROBE)
    x0 = sample_dataset(cfg.source, probe_rng.split(Stream.SOURCE), n)
    x1 = sample_dataset(cfg.target_data, probe_rng.split(Stream.TARGET), n)
    t = sample_time(probe_rng.split(Stream.TIME), n, cfg.target.t_eps)
    batch = build_targets(cfg.target, x0, x1, t, probe_rng.split(Stream.NOISE))
    return batch.x_t, t


def _check_resumable(previous: TrainConfig, cfg: TrainConfig):
    old = {k: v for k, v in previous.to_dict().items() if k not in RESUME_FREE_KEYS}
    new = {k: v for k, v in cfg.to_dict().items() if k not in RESUME_FREE_KEYS}
    changed = sorted(k for k in new if old.get(k) != new[k])
    if changed:
        raise ValueError(f"cannot resume: configuration differs in {changed}")


def train(cfg: TrainConfig, log_path=None, init: Checkpoint | None = None) -> Checkpoint:
    """
    @brief Runs the Bridge Matching loop for `cfg.iterations` steps.

    Each iteration samples x0, x1 and t, builds a TargetBatch, evaluates both
    networks at (x_t, t), computes the loss and takes one AdamW step per network.
    The run is deterministic given `cfg.seed`. Resuming from a checkpoint
    returned by `train` restores the optimizer moments and the data streams, so
    `train(cfg_b, init=train(cfg_a))` matches one run of a + b iterations.

    @param cfg (TrainConfig): Training configuration.
    @param log_path (str or Path, optional): Line-delimited JSON progress log.
    @param init (Checkpoint, optional): Starting point; defaults to `init_checkpoint(cfg)`.
        Its configuration may differ from `cfg` only in `iterations` and `log_interval`.

    @return Checkpoint: Final parameters with optimizer and stream state.

    @throws TrainingDivergedError if the loss becomes non-finite.
    """
    if init is not None:
        _check_resumable(init.config, cfg)
    ckpt = init if init is not None else init_checkpoint(cfg)
    u_params, d_params = ckpt.u_params, ckpt.d_params
    opt_kwargs = dict(lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay, eps=cfg.adam_eps)
    u_state = ckpt.u_opt if ckpt.u_opt is not None else AdamWState.create(u_params, **opt_kwargs)
    d_state = ckpt.d_opt if ckpt.d_opt is not None else AdamWState.create(d_params, **opt_kwargs)

    root = Rng(cfg.seed)
    rngs = {s.name: root.split(s) for s in TRAIN_STREAMS}
    if ckpt.streams is not None:
        for name, rng in rngs.items():
            rng.state = ckpt.streams[name]
    src_rng, tgt_rng, time_rng, noise_rng = (rngs[s.name] for s in TRAIN_STREAMS)

    log_file = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    logger.info("Training %s: %s -> %s, %d iterations from %d, batch %d, hidden %d", cfg.target.kind,
                cfg.source.kind, cfg.target_data.kind, cfg.iterations, ckpt.iteration, cfg.batch_size, cfg.hidden)
    try:
        for it in range(1, cfg.iterations + 1):
            step = ckpt.iteration + it
            x0 = sample_dataset(cfg.source, src_rng, cfg.batch_size)
            x1 = sample_dataset(cfg.target_data, tgt_rng, cfg.batch_size)
            t = sample_time(time_rng, cfg.batch_size, cfg.target.t_eps)
            batch = build_targets(cfg.target, x0, x1, t, noise_rng)

            u_pred, u_cache = mlp_forward_cached(u_params, batch.x_t, t)
            d_pred, d_cache = mlp_forward_cached(d_params, batch.x_t, t)
            loss, u_cot, d_cot = compute_bm_loss(u_pred, d_pred, batch.u_star, batch.d_star, cfg.lambda_d)
            if not np.isfinite(loss):
                raise TrainingDivergedError(step, loss)

            u_grads = mlp_backward(u_params, batch.x_t, t, u_cot, cache=u_cache)
            d_grads = mlp_backward(d_params, batch.x_t, t, d_cot, cache=d_cache)
            u_state, u_params = adamw_step(u_state, u_params, u_grads)
            d_state, d_params = adamw_step(d_state, d_params, d_grads)

            if step % cfg.log_interval == 0 or it == cfg.iterations:
                mean_u = _mean_norm(u_pred)
                mean_d = _mean_norm(d_pred)
                record = {
                    "iteration": step,
                    "loss": loss,
                    "loss_u": float(np.mean(np.sum((u_pred - batch.u_star) ** 2, axis=1))),
                    "loss_d": float(np.mean(np.sum((d_pred - batch.d_star) ** 2, axis=1))),
                    "mean_u": mean_u,
                    "mean_d": mean_d,
                    "ratio": mean_d / (mean_u + RATIO_EPS),
                }
                logger.info("iter %d loss %.6f |u| %.4f |d| %.4f", step, loss, mean_u, mean_d)
                if log_file is not None:
                    log_file.write(json.dumps(record) + "\n")
                    log_file.flush()
    finally:
        if log_file is not None:
            log_file.close()

    total = ckpt.iteration + cfg.iterations
    if not (u_params.is_finite() and d_params.is_finite()):
        raise TrainingDivergedError(total, float("nan"))

    streams = {name: rng.state for name, rng in rngs.items()}
    result = Checkpoint(u_params, d_params, cfg, total, u_state, d_state, streams)
    if cfg.iterations > 0:
        probe_x, probe_t = probe_batch(cfg, min(PROBE_SIZE, max(cfg.batch_size, 2)))
        mean_u, mean_d, ratio = field_magnitude_stats(result, probe_x, probe_t)
        logger.info("held-out magnitudes: E|u| %.4f, E|d| %.4f, ratio %.4f", mean_u, mean_d, ratio)
    return result
