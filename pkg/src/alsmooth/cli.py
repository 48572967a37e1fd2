"""Command-line pipeline: gen-data, label, train, eval, report, context-experiment.

Stages communicate only through documented files (dataset directory,
checkpoints, CSVs), so any stage can be rerun or replaced.  All randomness
derives from config seeds; rerunning a stage with the same inputs
reproduces its outputs byte for byte.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

import numpy as np

from . import calibration, synthdata
from .config import ConfigError, ExperimentConfig, apply_master_seed, load_config, resolve_config
from .fileio import fmt_float, read_jsonl
from .geometry import AugmentTransform, BoundingBox, ImageFrame, transformed_objectness
from .labeling import LabelingPolicy, smoothing_from_objectness
from .model import ConvNet, EpochLog, NumericError, train
from .synthdata import MANIFEST_NAME, Dataset, EvalSet, generate_sample

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _worker_count() -> int:
    raw = os.environ.get("ALS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"ALS_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"ALS_THREADS must be >= 1, got {n}")
    return n


def _load_manifest(data_dir: Path) -> dict:
    path = Path(data_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _dataset_config(data_dir: Path) -> tuple[dict, ExperimentConfig]:
    manifest = _load_manifest(data_dir)
    return manifest, resolve_config(manifest["config"])


def _overlay_config(base: ExperimentConfig, config_path, args) -> ExperimentConfig:
    raw = base.to_dict()
    if config_path:
        file_raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(file_raw, dict):
            raise ConfigError(f"{config_path}: top level must be an object")
        for section, overrides in file_raw.items():
            if section == "policies":
                raw["policies"] = overrides
                continue
            if section not in raw:
                raise ConfigError(f"unknown config section(s): ['{section}']")
            if not isinstance(overrides, dict):
                raise ConfigError(f"section {section} must be an object")
            raw[section].update(overrides)
    cfg = resolve_config(raw)
    if getattr(args, "seed", None) is not None:
        cfg = apply_master_seed(cfg, args.seed)
    raw = cfg.to_dict()
    if getattr(args, "epochs", None) is not None:
        raw["train"]["epochs"] = args.epochs
    if getattr(args, "context_fraction", None) is not None:
        raw["sampler"]["context_fraction"] = args.context_fraction
    return resolve_config(raw)


# --------------------------------------------------------------------------
# gen-data
# --------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = apply_master_seed(cfg, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    workers = _worker_count()
    gen = partial(generate_sample, cfg.scene)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            train_samples = list(pool.map(gen, range(cfg.train_count), chunksize=64))
            val_samples = list(
                pool.map(gen, range(synthdata.VAL_INDEX_OFFSET, synthdata.VAL_INDEX_OFFSET + cfg.val_count), chunksize=64)
            )
    else:
        train_samples = [gen(i) for i in range(cfg.train_count)]
        val_samples = [gen(synthdata.VAL_INDEX_OFFSET + i) for i in range(cfg.val_count)]

    mean_pixel = float(np.mean([s.image for s in train_samples], dtype=np.float64))
    synthdata.write_split(out, "train", train_samples)
    synthdata.write_split(out, "val", val_samples)
    removed = [synthdata.remove_objects(s, mean_pixel) for s in val_samples]
    synthdata.write_split(out, "val_context", val_samples, images_override=removed)

    manifest = {
        "format_version": synthdata.FORMAT_VERSION,
        "config": cfg.to_dict(),
        "mean_pixel": mean_pixel,
        "splits": {
            "train": {"count": cfg.train_count, "objects_removed": False},
            "val": {"count": cfg.val_count, "objects_removed": False},
            "val_context": {"count": cfg.val_count, "objects_removed": True},
        },
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {cfg.train_count} train / {cfg.val_count} val samples to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# label
# --------------------------------------------------------------------------


def _parse_transform(path) -> dict | None:
    if path is None:
        return None
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(spec) - {"crop", "output_size", "hflip"}
    if unknown:
        raise ConfigError(f"unknown transform key(s): {sorted(unknown)}")
    return spec


def cmd_label(args) -> int:
    policy = LabelingPolicy.parse(args.policy, args.num_classes)
    tspec = _parse_transform(args.transform)
    records = read_jsonl(args.annotations)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample_id", "objectness", "alpha"] + [f"p{i}" for i in range(args.num_classes)]
        )
        for rec in records:
            frame = ImageFrame(*rec["frame"])
            box = BoundingBox(*rec["box"])
            if tspec is None:
                t = AugmentTransform.identity(frame)
            else:
                t = AugmentTransform(
                    crop=BoundingBox(*tspec.get("crop", [0, 0, frame.width, frame.height])),
                    output_size=tuple(tspec.get("output_size", [frame.width, frame.height])),
                    hflip=bool(tspec.get("hflip", False)),
                )
            objectness = transformed_objectness(box, frame, t)
            label = policy.target(int(rec["class"]), objectness)
            row = [Path(rec["image"]).stem, fmt_float(objectness), fmt_float(smoothing_from_objectness(objectness))]
            row.extend(fmt_float(p) for p in label)
            writer.writerow(row)
    print(f"labeled {len(records)} samples -> {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# train
# --------------------------------------------------------------------------


def _load_train_data(data_dir: Path, cfg: ExperimentConfig) -> tuple[Dataset, EvalSet]:
    manifest = _load_manifest(data_dir)
    mean_pixel = float(manifest["mean_pixel"])
    dataset = synthdata.load_split(data_dir, "train", cfg.scene, mean_pixel)
    val = synthdata.load_split(data_dir, "val", cfg.scene, mean_pixel)
    val_set = synthdata.split_eval_set(val, objects_removed=False, output_size=cfg.sampler.output_size)
    return dataset, val_set


def cmd_train(args) -> int:
    _, base_cfg = _dataset_config(Path(args.data))
    cfg = _overlay_config(base_cfg, args.config, args)
    policy = LabelingPolicy.parse(args.policy, cfg.scene.num_classes)
    dataset, val_set = _load_train_data(Path(args.data), cfg)

    def progress(entry: EpochLog) -> None:
        print(
            f"epoch {entry.epoch:3d}  lr {entry.lr:.4g}  "
            f"train_loss {entry.train_loss:.4f}  val_acc {entry.val_acc:.4f}"
        )

    net, logs = train(dataset, policy, cfg.net, cfg.train, cfg.sampler, val_set, progress=progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    net.save(out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "train_loss", "val_acc"])
        for entry in logs:
            writer.writerow(
                [entry.epoch, fmt_float(entry.lr), fmt_float(entry.train_loss), fmt_float(entry.val_acc)]
            )
    print(f"saved checkpoint {out} and epoch log {log_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval / report
# --------------------------------------------------------------------------


def _eval_records(net: ConvNet, eval_set: EvalSet, batch_size: int = 256):
    records = []
    for start in range(0, len(eval_set.images), batch_size):
        probs = net.predict_probs(eval_set.images[start : start + batch_size])
        for row, true_class, objectness in zip(
            probs,
            eval_set.classes[start : start + batch_size],
            eval_set.objectness[start : start + batch_size],
        ):
            records.append(calibration.record_from_probs(row, int(true_class), float(objectness)))
    return records


def _load_eval_split(data_dir: Path, split: str) -> EvalSet:
    manifest, cfg = _dataset_config(data_dir)
    if split not in manifest["splits"]:
        raise ConfigError(f"dataset has no split {split!r}; choose from {sorted(manifest['splits'])}")
    ds = synthdata.load_split(data_dir, split, cfg.scene, float(manifest["mean_pixel"]))
    return synthdata.split_eval_set(
        ds,
        objects_removed=bool(manifest["splits"][split]["objects_removed"]),
        output_size=cfg.sampler.output_size,
    )


def cmd_eval(args) -> int:
    eval_set = _load_eval_split(Path(args.data), args.split)
    net = ConvNet.load(args.checkpoint)
    records = _eval_records(net, eval_set)
    sample_ids = [f"{i:05d}" for i in range(len(records))]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    calibration.write_predictions_csv(out_dir / "predictions.csv", sample_ids, records)
    rep = calibration.report(records)
    calibration.write_report_csv(out_dir / "report.csv", rep)
    calibration.write_bins_csv(out_dir / "bins.csv", rep.bins)
    print(f"evaluated {len(records)} samples from split {args.split} -> {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    _, records = calibration.read_predictions_csv(args.predictions)
    rep = calibration.report(records)
    stddevs = None
    if args.bootstrap:
        stddevs = calibration.bootstrap_stddevs(records, n_resamples=args.bootstrap, seed=args.bootstrap_seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    calibration.write_report_csv(out_dir / "report.csv", rep, stddevs)
    calibration.write_bins_csv(out_dir / "bins.csv", rep.bins)
    print(f"report over {rep.n_records} records -> {out_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------
# context-experiment
# --------------------------------------------------------------------------


def cmd_context_experiment(args) -> int:
    data_dir = Path(args.data)
    checkpoints: list[tuple[str, Path]] = []
    for spec_str in args.ckpt:
        policy, _, path = spec_str.partition("=")
        if not policy or not path:
            raise ConfigError(f"--ckpt expects POLICY=PATH, got {spec_str!r}")
        checkpoints.append((policy, Path(path)))
    for policy, path in checkpoints:
        if not path.exists():
            raise FileNotFoundError(f"no checkpoint for policy {policy!r}: {path}")

    object_set = _load_eval_split(data_dir, "val")
    context_set = _load_eval_split(data_dir, "val_context")

    rows = []
    for policy, path in checkpoints:
        net = ConvNet.load(path)
        row: dict[str, str] = {"policy": policy}
        for prefix, eval_set in (("object", object_set), ("context", context_set)):
            records = _eval_records(net, eval_set)
            row[f"{prefix}_acc"] = fmt_float(calibration.accuracy(records))
            row[f"{prefix}_overconfidence"] = fmt_float(calibration.overconfidence(records))
            row[f"{prefix}_underconfidence"] = fmt_float(calibration.underconfidence(records))
            row[f"{prefix}_avg_confidence"] = fmt_float(calibration.average_confidence(records))
        rows.append(row)

    fieldnames = [
        "policy",
        "object_acc",
        "object_overconfidence",
        "object_underconfidence",
        "object_avg_confidence",
        "context_acc",
        "context_overconfidence",
        "context_underconfidence",
        "context_avg_confidence",
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(f"context comparison over {len(rows)} policies -> {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser and entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alsmooth",
        description="Objectness-adaptive label smoothing: data generation, training and calibration evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    p.add_argument("--config", help="JSON config file (defaults apply for missing keys)")
    p.add_argument("--seed", type=int, help="master seed overriding all stream seeds")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("label", help="write target vectors for annotated samples")
    p.add_argument("--annotations", required=True, help="JSON-lines annotation file")
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--policy", required=True, help="hard | uniform:<smoothing> | adaptive:<blend>")
    p.add_argument("--transform", help="JSON file with crop/output_size/hflip applied to every sample")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train a classifier on a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory from gen-data")
    p.add_argument("--config", help="JSON config overriding the dataset manifest config")
    p.add_argument("--policy", required=True, help="hard | uniform:<smoothing> | adaptive:<blend>")
    p.add_argument("--seed", type=int, help="master seed overriding all stream seeds")
    p.add_argument("--epochs", type=int, help="override epoch count")
    p.add_argument("--context-fraction", type=float, help="override context sampling rate")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--log", help="epoch log CSV path (default: checkpoint path with .log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="val", help="val | val_context | train")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True, help="directory for predictions/report/bins CSVs")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="recompute a calibration report from a predictions CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap resamples for metric stddevs")
    p.add_argument("--bootstrap-seed", type=int, default=0)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("context-experiment", help="compare policies on object vs context validation sets")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", action="append", required=True, metavar="POLICY=PATH",
                   help="checkpoint per policy; repeatable")
    p.add_argument("--out", required=True, help="comparison CSV path")
    p.set_defaults(func=cmd_context_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def cli_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli_entry()
