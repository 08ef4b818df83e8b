"""Command-line entry points.

Subcommands: synth (generate a dataset), train (fit a model), infer
(cluster a dataset with a checkpoint), eval (score clusterings against
ground truth), baseline (run a comparison associator) and sweep
(threshold search for the appearance baselines). Exit codes: 0 success,
1 usage error, 2 data/config error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io as gio
from .baselines import (
    BaselineConfig,
    sweep_thresholds,
    threshold_assoc,
    top1_assoc,
)
from .config import RunConfig, apply_setting, load_config
from .errors import ConfigError, DataError, GnnccaError
from .graph import Clustering
from .inference import associate
from .metrics import METRIC_NAMES, evaluate_sequence, format_report
from .mpn import prepare_training_set, train
from .synthgen import SceneSpec, generate_scene

THREADS_ENV = "GNNCCA_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def worker_count() -> int:
    """Worker cap from GNNCCA_THREADS (0 or unset = auto)."""
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if value < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0, got {value}")
    if value == 0:
        return os.cpu_count() or 1
    return value


def build_parser() -> _Parser:
    parser = _Parser(prog="gnncca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cameras", type=int, default=4)
    p.add_argument("--identities", type=int, default=6)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--descriptor-dim", type=int, default=512)
    p.add_argument("--appearance-noise", type=float, default=0.1)
    p.add_argument("--camera-bias", type=float, default=0.0)
    p.add_argument("--pixel-noise", type=float, default=0.0)
    p.add_argument("--miss-prob", type=float, default=0.0)
    p.add_argument("--walk-step", type=float, default=0.1)

    p = sub.add_parser("train", help="train a model on a labeled dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--loss-log", help="write per-epoch losses to this file")
    _add_config_args(p)
    p.add_argument("--epochs", type=int, help="total training epochs")
    p.add_argument("--warmup", type=int, help="warmup epochs")
    p.add_argument("--batch", type=int, help="graphs per batch")
    p.add_argument("--lr", type=float, help="base learning rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--steps", type=int, help="message passing steps")
    p.add_argument("--seed", type=int)
    p.add_argument("--message-source", choices=("self", "neighbor"))

    p = sub.add_parser("infer", help="cluster a dataset with a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="clusters CSV output path")
    _add_config_args(p)
    p.add_argument("--threshold", type=float, help="binarization threshold")
    p.add_argument("--no-prune", action="store_true")
    p.add_argument("--no-split", action="store_true")

    p = sub.add_parser("eval", help="score clusterings against ground truth")
    p.add_argument("--data", required=True, help="dataset with identities")
    p.add_argument("--pred", required=True, help="clusters CSV to score")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--per-frame", action="store_true", help="per-frame rows")

    p = sub.add_parser("baseline", help="run a comparison associator")
    p.add_argument("--data", required=True)
    p.add_argument(
        "--method",
        required=True,
        choices=("l2_th", "cos_th", "top1", "geo", "geo_app"),
    )
    p.add_argument("--out", required=True, help="clusters CSV output path")
    p.add_argument("--report", help="also score against identities")
    p.add_argument("--appearance-threshold", type=float)
    p.add_argument("--spatial-threshold", type=float)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--per-frame-normalize", action="store_true")
    p.add_argument("--post-process", action="store_true")

    p = sub.add_parser("sweep", help="search appearance thresholds")
    p.add_argument("--data", required=True)
    p.add_argument("--method", default="l2_th", choices=("l2_th", "cos_th", "geo_app"))
    p.add_argument("--spatial-threshold", type=float)
    p.add_argument("--out", help="write the sweep report here instead of stdout")
    return parser


def _add_config_args(p) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        dest="settings",
        help="override one config key",
    )


def _resolve_config(args) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        config = load_config(args.config, config)
    for item in getattr(args, "settings", []):
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        apply_setting(config, key, value)
    direct = {
        "epochs": "total_epochs",
        "warmup": "warmup_epochs",
        "batch": "batch_size",
        "lr": "base_lr",
        "momentum": "momentum",
        "steps": "steps",
        "seed": "seed",
        "message_source": "message_source",
        "threshold": "binarize_threshold",
    }
    for arg_name, key in direct.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(config, key, value)
            config.touched.add(key)
    if getattr(args, "no_prune", False):
        config.prune = False
    if getattr(args, "no_split", False):
        config.split = False
    return config.validate()


def _cmd_synth(args) -> int:
    spec = SceneSpec(
        cameras=args.cameras,
        identities=args.identities,
        frames=args.frames,
        descriptor_dim=args.descriptor_dim,
        appearance_noise_sigma=args.appearance_noise,
        camera_bias_sigma=args.camera_bias,
        miss_prob=args.miss_prob,
        walk_step_sigma=args.walk_step,
        pixel_noise_sigma=args.pixel_noise,
        seed=args.seed,
    )
    scene = generate_scene(spec)
    gio.write_scene(scene, args.out)
    print(
        f"wrote {len(scene.detections)} detections over {spec.frames} frames "
        f"to {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    config = _resolve_config(args)
    dataset = gio.load_dataset(args.data)
    if dataset.store.dim != config.descriptor_dim:
        if "descriptor_dim" in config.touched:
            raise ConfigError(
                f"dataset descriptors have dim {dataset.store.dim}, "
                f"config says {config.descriptor_dim}"
            )
        config.descriptor_dim = dataset.store.dim
    prepared = prepare_training_set(
        dataset.graphs(),
        dataset.store,
        dataset.calibs,
        config.message_source,
        config.normalize_descriptors,
    )
    log_lines = []

    def log(epoch, loss, lr):
        log_lines.append(f"epoch={epoch} lr={lr!r} loss={loss!r}")
        print(log_lines[-1])

    params, _history = train(
        prepared,
        config.seed,
        config.schedule(),
        steps=config.steps,
        message_source=config.message_source,
        node_aggregation=config.node_aggregation,
        edge_symmetrize=config.edge_symmetrize,
        normalize_descriptors=config.normalize_descriptors,
        positive_weight=config.positive_weight,
        standardize_features=config.standardize_features,
        log=log,
    )
    gio.save_checkpoint(args.out, params, config.seed)
    if args.loss_log:
        with open(args.loss_log, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(log_lines) + "\n")
    print(f"saved checkpoint to {args.out}")
    return 0


def _cmd_infer(args) -> int:
    config = _resolve_config(args)
    dataset = gio.load_dataset(args.data)
    params, _meta = gio.load_checkpoint(args.checkpoint)
    if params.descriptor_dim != dataset.store.dim:
        raise ConfigError(
            f"checkpoint expects descriptors of dim {params.descriptor_dim}, "
            f"dataset has {dataset.store.dim}"
        )

    def run_frame(item):
        _frame_id, graph = item
        return associate(
            graph,
            params,
            dataset.store,
            dataset.calibs,
            threshold=config.binarize_threshold,
            do_prune=config.prune,
            do_split=config.split,
            normalize_descriptors=config.normalize_descriptors,
        )

    workers = worker_count()
    if workers > 1 and len(dataset.frames) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            clusterings = list(pool.map(run_frame, dataset.frames))
    else:
        clusterings = [run_frame(item) for item in dataset.frames]
    gio.save_clusterings(args.out, dataset.frames, clusterings)
    print(f"wrote clusters for {len(dataset.frames)} frames to {args.out}")
    return 0


def _truth_clusterings(dataset) -> list:
    truths = []
    for frame_id, graph in dataset.frames:
        idents = [d.identity for d in graph.detections]
        if any(i is None for i in idents):
            raise DataError(
                f"frame {frame_id}: ground-truth identities are required"
            )
        truths.append(Clustering.from_labels(idents))
    return truths


def _cmd_eval(args) -> int:
    dataset = gio.load_dataset(args.data, require_calibs=False)
    pred_map = gio.load_clusterings(args.pred)
    truths = _truth_clusterings(dataset)
    preds = []
    data_frames = {frame_id for frame_id, _ in dataset.frames}
    extra = sorted(set(pred_map) - data_frames)
    if extra:
        raise DataError(f"{args.pred}: predictions for unknown frames {extra}")
    for frame_id, graph in dataset.frames:
        frame_pred = pred_map.get(frame_id)
        if frame_pred is None:
            if graph.n_nodes == 0:
                preds.append(Clustering([]))
                continue
            raise DataError(f"{args.pred}: no predictions for frame {frame_id}")
        labels = []
        for det in graph.detections:
            key = (det.camera, det.det_id)
            if key not in frame_pred:
                raise DataError(
                    f"{args.pred}: frame {frame_id} lacks a cluster for "
                    f"camera={det.camera} det_id={det.det_id}"
                )
            labels.append(frame_pred[key])
        if len(frame_pred) != len(labels):
            raise DataError(
                f"{args.pred}: frame {frame_id} has {len(frame_pred)} rows "
                f"for {len(labels)} detections"
            )
        preds.append(Clustering.from_labels(labels))
    report = evaluate_sequence(
        truths, preds, [frame_id for frame_id, _ in dataset.frames]
    )
    text = format_report(report, per_frame=args.per_frame)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_baseline(args) -> int:
    needs_calibs = args.method in ("geo", "geo_app")
    dataset = gio.load_dataset(args.data, require_calibs=needs_calibs)
    graphs = dataset.graphs()
    if args.method == "top1":
        clusterings = top1_assoc(graphs, dataset.store)
    else:
        cfg = BaselineConfig(
            args.method,
            appearance_threshold=args.appearance_threshold,
            spatial_threshold=args.spatial_threshold,
            normalize=not args.no_normalize,
            per_frame_normalize=args.per_frame_normalize,
            post_process=args.post_process,
        )
        clusterings = threshold_assoc(graphs, dataset.store, dataset.calibs, cfg)
    gio.save_clusterings(args.out, dataset.frames, clusterings)
    print(f"wrote {args.method} clusters to {args.out}")
    if args.report:
        truths = _truth_clusterings(dataset)
        report = evaluate_sequence(
            truths, clusterings, [frame_id for frame_id, _ in dataset.frames]
        )
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_report(report))
    return 0


def _cmd_sweep(args) -> int:
    needs_calibs = args.method == "geo_app"
    dataset = gio.load_dataset(args.data, require_calibs=needs_calibs)
    result = sweep_thresholds(
        dataset.graphs(),
        dataset.store,
        dataset.calibs,
        args.method,
        spatial_threshold=args.spatial_threshold,
    )
    lines = [
        f"{'threshold':>9} " + " ".join(f"{name:>13}" for name in METRIC_NAMES)
    ]
    for entry in result.entries:
        lines.append(
            f"{entry.threshold:>9.1f} "
            + " ".join(f"{entry.report.mean[name]:>13.6f}" for name in METRIC_NAMES)
        )
    lines.append("")
    lines.append(f"method={args.method}")
    lines.append(f"best_threshold={result.best_threshold!r}")
    best = result.best_entry()
    for name in METRIC_NAMES:
        lines.append(f"best.{name}={best.report.mean[name]!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "baseline": _cmd_baseline,
    "sweep": _cmd_sweep,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except GnnccaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
