"""
@file utils.py
@brief Utility functions: logging setup, checkpoint files, JSON records, run ids.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os

import numpy as np

from src.models import AdamWState, MlpParams
from src.training import Checkpoint, TrainConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
RUN_ID_LENGTH = 16


class CheckpointError(RuntimeError):
    """Raised when a checkpoint file is missing or malformed."""


def setup_logging(level=logging.INFO):
    """
    @brief Configures one stream handler on the root logger.

    @param level (int, optional): Logging level. Default is INFO.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def write_json(obj, path):
    """
    @brief Writes `obj` as indented JSON with sorted keys.
    """
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def run_id(config: dict) -> str:
    """
    @brief Short sha256 digest of a resolved configuration.

    Identical configurations (seed included) map to the same id.
    """
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:RUN_ID_LENGTH]


def _pack(prefix: str, params: MlpParams) -> dict:
    arrays = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"{prefix}_W{i}"] = np.asarray(w, dtype="<f8")
        arrays[f"{prefix}_b{i}"] = np.asarray(b, dtype="<f8")
    return arrays


def _unpack(prefix: str, data) -> MlpParams:
    weights, biases = [], []
    i = 0
    while f"{prefix}_W{i}" in data.files:
        weights.append(np.array(data[f"{prefix}_W{i}"], dtype=np.float64))
        biases.append(np.array(data[f"{prefix}_b{i}"], dtype=np.float64))
        i += 1
    return MlpParams(weights, biases)


def _pack_optimizer(prefix: str, state: AdamWState) -> dict:
    arrays = {f"{prefix}_opt_step": np.array(state.step, dtype="<i8")}
    for i, (m, v) in enumerate(zip(state.m, state.v)):
        arrays[f"{prefix}_opt_m{i}"] = np.asarray(m, dtype="<f8")
        arrays[f"{prefix}_opt_v{i}"] = np.asarray(v, dtype="<f8")
    return arrays


def _unpack_optimizer(prefix: str, data, params: MlpParams, config: TrainConfig) -> AdamWState:
    count = len(params.arrays())
    m = [np.array(data[f"{prefix}_opt_m{i}"], dtype=np.float64) for i in range(count)]
    v = [np.array(data[f"{prefix}_opt_v{i}"], dtype=np.float64) for i in range(count)]
    return AdamWState(m, v, int(data[f"{prefix}_opt_step"]), config.lr, config.betas,
                      config.weight_decay, config.adam_eps)


def save_checkpoint(ckpt: Checkpoint, path):
    """
    @brief Saves both networks, the training configuration and the iteration count.

    Parameters are stored as little-endian float64 arrays, the configuration as
    a JSON string, so no pickling is involved. When the checkpoint carries
    optimizer and stream state (every checkpoint returned by `train` does) they
    are stored too, so a loaded checkpoint can be resumed. README.md lists the keys.

    @param ckpt (Checkpoint): Checkpoint to save.
    @param path (str): Destination `.npz` file.
    """
    arrays = _pack("u", ckpt.u_params)
    arrays.update(_pack("d", ckpt.d_params))
    arrays["config"] = np.array(json.dumps(ckpt.config.to_dict(), sort_keys=True))
    arrays["iteration"] = np.array(ckpt.iteration, dtype="<i8")
    if ckpt.u_opt is not None and ckpt.d_opt is not None and ckpt.streams is not None:
        arrays.update(_pack_optimizer("u", ckpt.u_opt))
        arrays.update(_pack_optimizer("d", ckpt.d_opt))
        arrays["streams"] = np.array(json.dumps(ckpt.streams, sort_keys=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    logger.info("Checkpoint saved to %s", path)


def load_checkpoint(path) -> Checkpoint:
    """
    @brief Loads a checkpoint written by `save_checkpoint`.

    @throws CheckpointError if the file is missing or malformed.
    """
    if not os.path.isfile(path):
        raise CheckpointError(f"checkpoint not found at path: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            config = TrainConfig.from_dict(json.loads(str(data["config"])))
            ckpt = Checkpoint(_unpack("u", data), _unpack("d", data), config, int(data["iteration"]))
            if "streams" in data.files:
                ckpt.u_opt = _unpack_optimizer("u", data, ckpt.u_params, config)
                ckpt.d_opt = _unpack_optimizer("d", data, ckpt.d_params, config)
                ckpt.streams = json.loads(str(data["streams"]))
            return ckpt
    except (KeyError, ValueError, TypeError, OSError) as e:
        raise CheckpointError(f"malformed checkpoint {path}: {e}") from e
