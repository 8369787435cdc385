"""Command-line front door: prepare / train / evaluate / predict / score."""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import plots
from .augment import AugmentError, load_eval_sample
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, PipelineConfig, dump_config, load_config, parse_overrides
from .data import (CLASS_NAMES, ClassDistribution, DataError, NUM_CLASSES, ReconcileReport,
                   compute_class_weights, parse_annotation_file, read_manifest, reconcile,
                   resample, split_train_val, write_manifest)
from .metrics import MetricsError, MetricsReport
from .resnet import build_model
from .tensor import Tensor, TensorError
from .training import TrainingError, evaluate_model, fit
from .tensor import softmax_rows

IMAGE_EXTS = (".jpg", ".jpeg", ".png", ".bmp")


class CliError(RuntimeError):
    pass


def _echo_config(cfg: PipelineConfig, directory):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "effective_config.txt"), "w", encoding="utf-8") as f:
        f.write(dump_config(cfg))


def _load_cfg(args) -> PipelineConfig:
    overrides = {}
    for item in getattr(args, "set", None) or []:
        parsed = parse_overrides([item])
        overrides.update(parsed)
    return load_config(getattr(args, "config", None), overrides, getattr(args, "seed", None))


def _distribution_table(rows: list[tuple[str, ClassDistribution]]) -> str:
    headers = ["Data set", *CLASS_NAMES, "Total"]
    table = [headers]
    for name, dist in rows:
        table.append([name, *[str(c) for c in dist.counts], str(dist.total)])
    widths = [max(len(r[i]) for r in table) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    return "\n".join(lines) + "\n"


def cmd_prepare(args) -> int:
    cfg = _load_cfg(args)
    ann_dir = args.annotations
    annotation_files = sorted(
        f for f in os.listdir(ann_dir) if f.endswith(".txt"))
    if not annotation_files:
        raise DataError(f"no annotation files in {ann_dir}")
    manifest = []
    report = ReconcileReport()
    for fname in annotation_files:
        video_id = os.path.splitext(fname)[0]
        image_dir = os.path.join(args.images, video_id)
        labels = parse_annotation_file(os.path.join(ann_dir, fname))
        if not os.path.isdir(image_dir):
            report.dropped_missing_image += sum(1 for lab in labels if lab != -1)
            continue
        part, part_report = reconcile(image_dir, labels, video_id)
        manifest.extend(part)
        report += part_report
    if not manifest:
        raise DataError("zero usable frames after reconciliation")

    train, val = split_train_val(manifest, cfg.split.fraction, cfg.split.seed,
                                 cfg.split.granularity)
    original_dist = ClassDistribution.of(train)
    sampled = resample(train, cfg.sampler)
    sampled_dist = ClassDistribution.of(sampled)
    weights = compute_class_weights(sampled_dist)

    out = args.out
    os.makedirs(out, exist_ok=True)
    write_manifest(sampled, os.path.join(out, "train_manifest.csv"))
    write_manifest(val, os.path.join(out, "val_manifest.csv"))
    with open(os.path.join(out, "class_weights.txt"), "w", encoding="utf-8") as f:
        for name, w in zip(CLASS_NAMES, weights):
            f.write(f"{name} {w:.10f}\n")
    table = _distribution_table([
        ("Original Train Set", original_dist),
        ("Sampled Train Set", sampled_dist),
        ("Validation Set", ClassDistribution.of(val)),
    ])
    with open(os.path.join(out, "distribution_report.txt"), "w", encoding="utf-8") as f:
        f.write(table)
        f.write("\n" + report.as_text() + "\n")
        for key, value in report.as_dict().items():
            f.write(f"reconcile.{key} = {value}\n")
    plots.plot_distribution(original_dist, sampled_dist, os.path.join(out, "distribution.png"))
    _echo_config(cfg, out)
    sys.stdout.write(table)
    sys.stdout.write(report.as_text() + "\n")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    train_manifest = read_manifest(args.manifest)
    val_manifest = read_manifest(args.val_manifest)
    model = build_model(cfg.model, seed=cfg.train.seed)
    if args.init_weights:
        load_checkpoint(model, args.init_weights, head_policy=args.head_policy,
                        head_seed=cfg.train.seed)
    weights = compute_class_weights(ClassDistribution.of(train_manifest))
    os.makedirs(args.out, exist_ok=True)
    _echo_config(cfg, args.out)
    if cfg.train.epochs == 0:
        save_checkpoint(model, os.path.join(args.out, "checkpoint_final.expr1"))
        from .training import write_history
        write_history([], os.path.join(args.out, "history.csv"))
        print("epochs = 0; wrote initial checkpoint only")
        return 0
    best_path, history = fit(model, train_manifest, val_manifest, weights,
                             cfg.train, cfg.augment, args.out)
    plots.plot_history(history, os.path.join(args.out, "history.png"))
    last = history[-1]
    print(f"done: best checkpoint {best_path}; final val score {last['val_score']:.4f}")
    return 0


def _write_report(report: MetricsReport, report_path):
    directory = os.path.dirname(os.path.abspath(report_path)) or "."
    os.makedirs(directory, exist_ok=True)
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(report.as_text())
    stem, _ = os.path.splitext(report_path)
    with open(stem + ".json", "w", encoding="utf-8") as f:
        f.write(report.as_json())
    plots.plot_confusion(report.confusion, stem + "_confusion.png")


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    manifest = read_manifest(args.manifest)
    model = build_model(cfg.model, seed=cfg.train.seed)
    load_checkpoint(model, args.weights, head_policy="strict")
    report = evaluate_model(model, manifest, cfg.augment, batch_size=cfg.train.batch_size)
    _write_report(report, args.report)
    _echo_config(cfg, os.path.dirname(os.path.abspath(args.report)) or ".")
    for name, value in report.rows():
        print(f"{name} = {value:.6f}")
    return 0


def _scan_images(root) -> list[str]:
    found = []
    for dirpath, _, files in os.walk(root):
        for fname in files:
            if os.path.splitext(fname)[1].lower() in IMAGE_EXTS:
                found.append(os.path.join(dirpath, fname))
    return sorted(found)


def cmd_predict(args) -> int:
    cfg = _load_cfg(args)
    paths = _scan_images(args.images)
    if not paths:
        raise DataError(f"no images under {args.images}")
    model = build_model(cfg.model, seed=cfg.train.seed)
    load_checkpoint(model, args.weights, head_policy="strict")
    k = cfg.model.num_classes
    rows = []
    batch_paths: list[str] = []
    batch_imgs: list[np.ndarray] = []

    def flush():
        if not batch_imgs:
            return
        logits = model.forward(Tensor(np.stack(batch_imgs).astype(np.float32)), training=False)
        probs = softmax_rows(logits.data)
        for p, prob in zip(batch_paths, probs):
            rows.append([p, int(prob.argmax()), *[f"{v:.8f}" for v in prob]])
        batch_paths.clear()
        batch_imgs.clear()

    for path in paths:
        try:
            img = load_eval_sample(path, cfg.augment)
        except AugmentError as exc:
            sys.stderr.write(f"warning: {exc}\n")
            flush()
            rows.append([path, -1, *["0.00000000"] * k])
            continue
        batch_paths.append(path)
        batch_imgs.append(img)
        if len(batch_imgs) >= cfg.train.batch_size:
            flush()
    flush()
    rows.sort(key=lambda r: r[0])

    directory = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(directory, exist_ok=True)
    with open(args.out, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["path", "pred", *[f"prob_{i}" for i in range(k)]])
        writer.writerows(rows)
    _echo_config(cfg, directory)
    print(f"wrote {len(rows)} predictions to {args.out}")
    return 0


def _read_predictions(path) -> dict[str, int]:
    preds = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[:2] != ["path", "pred"]:
            raise DataError(f"{path}: expected predictions CSV with path,pred columns")
        for row in reader:
            preds[row[0]] = int(row[1])
    if not preds:
        raise DataError(f"{path}: empty predictions file")
    return preds


def _read_labels(path) -> dict[str, int]:
    labels = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header and header[0] == "path" and "label" in header:
            label_col = header.index("label")
            for row in reader:
                labels[row[0]] = int(row[label_col])
        else:
            raise DataError(f"{path}: expected CSV with path and label columns")
    if not labels:
        raise DataError(f"{path}: empty labels file")
    return labels


def cmd_score(args) -> int:
    preds = _read_predictions(args.predictions)
    labels = _read_labels(args.labels)
    for p in sorted(preds):
        if p not in labels:
            raise DataError(f"prediction path not present in labels: {p}")
    for p in sorted(labels):
        if p not in preds:
            raise DataError(f"label path not present in predictions: {p}")
    order = sorted(preds)
    pred_list = [preds[p] for p in order]
    for p, value in zip(order, pred_list):
        if not 0 <= value < NUM_CLASSES:
            raise DataError(f"unscorable prediction {value} for {p}")
    label_list = [labels[p] for p in order]
    report = MetricsReport.from_predictions(pred_list, label_list)
    _write_report(report, args.report)
    for name, value in report.rows():
        print(f"{name} = {value:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="exprnet",
                                     description="Seven-expression classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="flat section.key = value config file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override a single config key (repeatable)")
            p.add_argument("--seed", type=int, help="master seed for all seeded stages")

    p = sub.add_parser("prepare", help="reconcile, split, resample, compute weights")
    p.add_argument("--images", required=True, help="directory of per-video frame directories")
    p.add_argument("--annotations", required=True, help="directory of per-video label files")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fine-tune the model on a prepared manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--val-manifest", required=True, dest="val_manifest")
    p.add_argument("--init-weights", dest="init_weights")
    p.add_argument("--head-policy", dest="head_policy", default="reinit_head",
                   choices=["strict", "reinit_head"])
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--report", required=True)
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="write per-image class probabilities")
    p.add_argument("--images", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="score a predictions file against labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_score)

    return parser


_KNOWN_ERRORS = (CliError, ConfigError, DataError, AugmentError, MetricsError,
                 TrainingError, CheckpointError, TensorError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _KNOWN_ERRORS as exc:
        sys.stderr.write(f"error[{type(exc).__name__}]: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
