"""
@file main.py
@brief Command-line entry point for training, sampling, evaluating and verifying Bridge Matching models.

Commands:
- `train`: fits u_theta and d_phi and writes checkpoint.npz, train_log.jsonl and a loss plot.
- `sample`: integrates the recombined field lambda_u u + lambda_d d and writes samples.csv
  (optionally traj.csv and one scatter frame per recorded state).
- `eval`: MMD^2 / FID_2D of generated samples against fresh target samples, or of two sample files.
- `fields`: evaluates u and d on a 45 x 45 grid at five times and renders them.
- `oracle-check`: runs the closed-form Gaussian identity suite.
- `sweep`: evaluates a list of osmotic weights lambda_d with lambda_u = 1.

Outputs go to `<out>/<run-id>/`, where <out> defaults to $BRIDGE_MATCHING_OUT or
`out`, and <run-id> is a hash of the resolved training configuration so every
command of one experiment shares a directory. Exit codes: 0 success, 1 usage or
configuration error, 2 runtime failure, 3 failed oracle check.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from src.config import ConfigError, EvalOptions, RunConfig, SampleOptions, dump_config, resolve_config
from src.data_generation import DATASET_KINDS, plot_range, sample_dataset
from src.data_loading import load_samples, load_training_log
from src.export import export_field_grid, export_samples, export_trajectory
from src.metrics import MetricsReport, evaluate_samples, self_noise_floor
from src.numerics import Rng, Stream
from src.oracle import run_identity_suite
from src.sampling import (METHODS, IntegrationError, RecombinedField, generate_trajectory, osmotic_contribution,
                          step_count)
from src.targets import TARGET_KINDS
from src.training import Checkpoint, TrainingDivergedError, field_magnitude_stats, probe_batch, train
from src.utils import (CheckpointError, ensure_dir, load_checkpoint, read_json, run_id, save_checkpoint,
                       setup_logging, write_json)
from src.visualization import plot_sweep, plot_training_history, render_scatter

logger = logging.getLogger("bridge_matching")

OUT_ENV = "BRIDGE_MATCHING_OUT"
EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ORACLE = 0, 1, 2, 3


class UsageError(Exception):
    """Raised for malformed command lines."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


## **Evaluation pipelines**

def _range_samples(ckpt: Checkpoint, n: int, seed: int):
    eval_rng = Rng(seed).split(Stream.EVAL)
    return (sample_dataset(ckpt.config.source, eval_rng.split(0), n),
            sample_dataset(ckpt.config.target_data, eval_rng.split(1), n))


def evaluate_checkpoint(ckpt: Checkpoint, lambda_u: float, lambda_d: float, sample: SampleOptions,
                        evaluation: EvalOptions, seed: int | None = None) -> tuple[MetricsReport, float]:
    """
    @brief Generates `evaluation.n` samples with the given weights and scores them against fresh target draws.

    The sampling and reference streams depend only on the seed, so calls that
    differ only in (lambda_u, lambda_d) share their random numbers.

    @return tuple: (MetricsReport, mean ||lambda_d d_phi|| over the recorded states).
    """
    seed = ckpt.config.seed if seed is None else seed
    record = min(sample.record, step_count(sample.step) + 1)
    traj = generate_trajectory(ckpt, ckpt.config.source, evaluation.n, lambda_u, lambda_d, sample.method,
                               sample.step, Rng(seed).split(Stream.SAMPLING), record=record)
    reference = sample_dataset(ckpt.config.target_data, Rng(seed).split(Stream.EVAL).split(2), evaluation.n)
    report = evaluate_samples(reference, traj.final, evaluation.bandwidth_rule)
    contribution = osmotic_contribution(RecombinedField(ckpt, lambda_u, lambda_d), traj)
    return report, contribution


def lambda_sweep(ckpt: Checkpoint, lambda_ds, sample: SampleOptions | None = None,
                 evaluation: EvalOptions | None = None, seed: int | None = None) -> pd.DataFrame:
    """
    @brief One MetricsReport per osmotic weight, lambda_u fixed to 1.

    @param ckpt (Checkpoint): Trained networks.
    @param lambda_ds (list): Osmotic weights, e.g. [0, 0.5, 1.0, 1.5].

    @return pandas.DataFrame: One row per weight with lambda_u, lambda_d, mmd2,
            fid2d, bandwidth, n_real, n_gen and d_contribution.
    """
    sample = sample or SampleOptions()
    evaluation = evaluation or EvalOptions()
    rows = []
    for lam in lambda_ds:
        report, contribution = evaluate_checkpoint(ckpt, 1.0, float(lam), sample, evaluation, seed)
        rows.append({"lambda_u": 1.0, "lambda_d": float(lam), **report.to_dict(), "d_contribution": contribution})
        logger.info("lambda_d %.3g: MMD^2 %.4g, FID_2D %.4g", lam, report.mmd2, report.fid2d)
    return pd.DataFrame(rows)


## **Run directory and manifest**

def _out_root(args) -> str:
    return args.out or os.environ.get(OUT_ENV, "out")


def _run_dir(args, cfg: RunConfig) -> str:
    if args.run_dir:
        return args.run_dir
    return os.path.join(_out_root(args), run_id(cfg.train.to_dict()))


def _update_manifest(run_dir: str, cfg: RunConfig, command: str, files, **extra):
    path = os.path.join(run_dir, "manifest.json")
    manifest = read_json(path) if os.path.isfile(path) else {"commands": {}}
    manifest["run_id"] = os.path.basename(os.path.normpath(run_dir))
    manifest["config"] = cfg.to_dict()
    manifest["commands"][command] = {"files": sorted(str(f) for f in files), **extra}
    write_json(manifest, path)
    dump_config(cfg, os.path.join(run_dir, "config.yaml"))


def _checkpoint(run_dir: str) -> Checkpoint:
    return load_checkpoint(os.path.join(run_dir, "checkpoint.npz"))


## **Commands**

def cmd_train(args, cfg: RunConfig) -> int:
    run_dir = ensure_dir(_run_dir(args, cfg))
    plots = ensure_dir(os.path.join(run_dir, "plots"))
    log_path = os.path.join(run_dir, "train_log.jsonl")
    ckpt = train(cfg.train, log_path=log_path)
    ckpt_path = os.path.join(run_dir, "checkpoint.npz")
    save_checkpoint(ckpt, ckpt_path)
    files = [ckpt_path, log_path]

    log = load_training_log(log_path) if os.path.getsize(log_path) > 0 else pd.DataFrame()
    if len(log):
        loss_plot = os.path.join(plots, "loss.svg")
        plot_training_history(log, loss_plot)
        files.append(loss_plot)

    probe_x, probe_t = probe_batch(cfg.train, min(4096, max(cfg.train.batch_size, 2)))
    mean_u, mean_d, ratio = field_magnitude_stats(ckpt, probe_x, probe_t)
    _update_manifest(run_dir, cfg, "train", files, iteration=ckpt.iteration,
                     diagnostics={"mean_u": mean_u, "mean_d": mean_d, "ratio": ratio})
    print(run_dir)
    return EXIT_OK


def cmd_sample(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(args, cfg)
    ckpt = _checkpoint(run_dir)
    opts = cfg.sample
    start = ckpt.config.source if opts.direction == "forward" else ckpt.config.target_data
    record = opts.record if args.trajectory else 2
    traj = generate_trajectory(ckpt, start, opts.n, opts.lambda_u, opts.lambda_d, opts.method, opts.step,
                               Rng(cfg.sample_seed).split(Stream.SAMPLING), record=record, direction=opts.direction)
    samples_path = os.path.join(run_dir, "samples.csv")
    export_samples(traj.final, samples_path)
    files = [samples_path]

    if args.trajectory:
        traj_path = os.path.join(run_dir, "traj.csv")
        export_trajectory(traj, traj_path)
        files.append(traj_path)
        frames = ensure_dir(os.path.join(run_dir, "plots", "frames"))
        lim = plot_range(_range_samples(ckpt, cfg.fields.range_samples, cfg.sample_seed))
        for k, (t, state) in enumerate(zip(traj.times, traj.states)):
            frame_path = os.path.join(frames, f"frame_{k:03d}.svg")
            render_scatter(state, lim, frame_path, title=f"t = {t:.3f}")
            files.append(frame_path)
    _update_manifest(run_dir, cfg, "sample", files)
    print(samples_path)
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    run_dir = ensure_dir(_run_dir(args, cfg))
    if (args.real is None) != (args.gen is None):
        raise UsageError("--real and --gen must be given together")
    if args.real is not None:
        report = evaluate_samples(load_samples(args.real), load_samples(args.gen), cfg.eval.bandwidth_rule)
        record = report.to_dict()
        target = None
    else:
        ckpt = _checkpoint(run_dir)
        report, contribution = evaluate_checkpoint(ckpt, cfg.sample.lambda_u, cfg.sample.lambda_d,
                                                   cfg.sample, cfg.eval, cfg.sample_seed)
        record = {**report.to_dict(), "lambda_u": cfg.sample.lambda_u, "lambda_d": cfg.sample.lambda_d,
                  "d_contribution": contribution}
        target = ckpt.config.target_data
    if args.floor:
        spec = target if target is not None else cfg.train.target_data
        record["noise_floor"] = self_noise_floor(spec, cfg.eval.n, cfg.eval.floor_seeds, cfg.sample_seed,
                                                 cfg.eval.bandwidth_rule)
    metrics_path = os.path.join(run_dir, "metrics.json")
    write_json(record, metrics_path)
    _update_manifest(run_dir, cfg, "eval", [metrics_path], metrics=record)
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def cmd_fields(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(args, cfg)
    ckpt = _checkpoint(run_dir)
    lim = plot_range(_range_samples(ckpt, cfg.fields.range_samples, cfg.sample_seed))
    _, files = export_field_grid(ckpt, lim, os.path.join(run_dir, "fields"), cfg.fields.grid, cfg.fields.times)
    _update_manifest(run_dir, cfg, "fields", files, range=list(lim))
    print(os.path.join(run_dir, "fields"))
    return EXIT_OK


def cmd_oracle(args, cfg: RunConfig) -> int:
    out_dir = args.run_dir or os.path.join(_out_root(args), f"oracle-{run_id(cfg.oracle.to_dict())}")
    ensure_dir(out_dir)
    report = run_identity_suite(cfg.oracle)
    record = report.to_dict()
    write_json({**record, "config": cfg.oracle.to_dict()}, os.path.join(out_dir, "oracle_report.json"))
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_ORACLE


def cmd_sweep(args, cfg: RunConfig) -> int:
    run_dir = _run_dir(args, cfg)
    ckpt = _checkpoint(run_dir)
    table = lambda_sweep(ckpt, cfg.sweep.lambda_d, cfg.sample, cfg.eval, cfg.sample_seed)
    table_path = os.path.join(run_dir, "sweep.csv")
    table.to_csv(table_path, index=False, float_format="%.17g")
    plot_path = os.path.join(ensure_dir(os.path.join(run_dir, "plots")), "sweep.svg")
    plot_sweep(table, plot_path)
    _update_manifest(run_dir, cfg, "sweep", [table_path, plot_path], table=table.to_dict(orient="records"))
    print(table.to_csv(index=False))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "fields": cmd_fields,
    "oracle-check": cmd_oracle,
    "sweep": cmd_sweep,
}


## **Argument parsing**

def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="training seed; part of the run id")
    common.add_argument("--out", help=f"output root (default ${OUT_ENV} or 'out')")
    common.add_argument("--run-dir", help="use this run directory instead of <out>/<run-id>")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--source", choices=DATASET_KINDS)
    common.add_argument("--target-data", choices=DATASET_KINDS)
    common.add_argument("--target-kind", choices=TARGET_KINDS)
    common.add_argument("--iterations", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--hidden", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--loss-lambda-d", type=float, help="osmotic weight in the training loss")

    sampling = _Parser(add_help=False)
    sampling.add_argument("--lambda-u", type=float)
    sampling.add_argument("--lambda-d", type=float)
    sampling.add_argument("--method", choices=METHODS)
    sampling.add_argument("--step", type=float)
    sampling.add_argument("--n", type=int)
    sampling.add_argument("--sample-seed", type=int, help="seed of the sampling streams (default: --seed)")

    parser = _Parser(prog="main.py", description="Bridge Matching on 2D transport tasks")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train u_theta and d_phi")
    p = sub.add_parser("sample", parents=[common, sampling], help="generate samples")
    p.add_argument("--direction", choices=("forward", "backward"))
    p.add_argument("--trajectory", action="store_true", help="record states, write traj.csv and frames")
    p.add_argument("--record", type=int)
    p = sub.add_parser("eval", parents=[common, sampling], help="compute MMD^2 and FID_2D")
    p.add_argument("--real", help="reference samples file")
    p.add_argument("--gen", help="generated samples file")
    p.add_argument("--bandwidth-rule", choices=("squared", "distance"))
    p.add_argument("--floor", action="store_true", help="also report the target self-noise floor")
    p = sub.add_parser("fields", parents=[common], help="export u and d on a grid")
    p.add_argument("--sample-seed", type=int, help="seed of the plotting-range draws (default: --seed)")
    p.add_argument("--grid", type=int)
    p.add_argument("--times", type=_float_list)
    p = sub.add_parser("oracle-check", parents=[common], help="run the Gaussian identity suite")
    p.add_argument("--draws", type=int, help="Monte-Carlo draws per score-recovery time")
    p = sub.add_parser("sweep", parents=[common, sampling], help="sweep the osmotic weight")
    p.add_argument("--lambdas", type=_float_list)
    return parser


def _put(d: dict, section, key, value):
    if value is None:
        return
    if section is None:
        d[key] = value
    else:
        d.setdefault(section, {})[key] = value


def overrides_from_args(args) -> dict:
    """
    @brief Nested config values for every flag given on the command line.
    """
    o: dict = {}
    get = lambda name: getattr(args, name, None)  # noqa: E731
    _put(o, None, "seed", get("seed"))
    if get("source"):
        o["source"] = {"kind": args.source}
    if get("target_data"):
        o["target_data"] = {"kind": args.target_data}
    _put(o, "target", "kind", get("target_kind"))
    _put(o, "train", "iterations", get("iterations"))
    _put(o, "train", "batch_size", get("batch_size"))
    _put(o, "train", "hidden", get("hidden"))
    _put(o, "train", "lr", get("lr"))
    _put(o, "train", "lambda_d", get("loss_lambda_d"))
    for key in ("lambda_u", "lambda_d", "method", "step", "n"):
        section = "eval" if key == "n" and args.command in ("eval", "sweep") else "sample"
        _put(o, section, key, get(key))
    _put(o, "sample", "direction", get("direction"))
    _put(o, "sample", "record", get("record"))
    _put(o, "sample", "seed", get("sample_seed"))
    _put(o, "eval", "bandwidth_rule", get("bandwidth_rule"))
    _put(o, "fields", "grid", get("grid"))
    _put(o, "fields", "times", get("times"))
    _put(o, "oracle", "recovery_draws", get("draws"))
    _put(o, "sweep", "lambda_d", get("lambdas"))
    return o


def run(argv) -> int:
    """
    @brief Parses `argv`, executes one command and returns its exit code.
    """
    try:
        args = build_parser().parse_args(list(argv))
        if args.command is None:
            raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
        setup_logging(logging.DEBUG if args.verbose else logging.INFO)
        cfg = resolve_config(args.config, overrides_from_args(args))
        return COMMANDS[args.command](args, cfg)
    except SystemExit as e:
        return EXIT_OK if not e.code else EXIT_USAGE
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, TrainingDivergedError, IntegrationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, OSError, np.linalg.LinAlgError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
