"""Adam fine-tuning loop with step learning-rate decay, plus model evaluation.

Defaults mirror the training recipe: lr 3e-3 decayed by 0.1 every 15 epochs,
batch size 256, 75 epochs, coupled-L2 weight decay 3e-4.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .augment import AugmentConfig, load_eval_sample, load_train_sample
from .checkpoint import save_checkpoint
from .data import FrameRecord
from .metrics import MetricsReport, argmax_predictions
from .resnet import Model
from .tensor import Tensor


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 3e-3
    batch_size: int = 256
    epochs: int = 75
    lr_step_epochs: int = 15
    lr_gamma: float = 0.1
    weight_decay: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 15

    def __post_init__(self):
        if not 0 < self.lr_gamma <= 1:
            raise ValueError("lr_gamma must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.lr_step_epochs < 1:
            raise ValueError("lr_step_epochs must be >= 1")


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Step schedule: base_lr * gamma^floor(epoch / step); epochs are 0-based,
    so epochs 0..step-1 run at the base rate."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.learning_rate * config.lr_gamma ** (epoch // config.lr_step_epochs)


class AdamOptimizer:
    """Adam with coupled L2 weight decay (decay added to the gradient before
    the moment updates, not applied to the parameter directly)."""

    def __init__(self, params, config: TrainConfig):
        self.params = list(params)
        self.config = config
        self.m = {p.name: np.zeros(p.shape, dtype=np.float64) for p in self.params}
        self.v = {p.name: np.zeros(p.shape, dtype=np.float64) for p in self.params}
        self.t = 0

    def step(self, lr: float):
        cfg = self.config
        self.t += 1
        b1t = 1.0 - cfg.beta1 ** self.t
        b2t = 1.0 - cfg.beta2 ** self.t
        for p in self.params:
            if p.grad is None:
                raise TrainingError(f"parameter {p.name} has no gradient")
            g = p.grad.astype(np.float64)
            if cfg.weight_decay:
                g = g + cfg.weight_decay * p.data.astype(np.float64)
            m = self.m[p.name]
            v = self.v[p.name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * np.square(g)
            update = lr * (m / b1t) / (np.sqrt(v / b2t) + cfg.epsilon)
            p.data = (p.data.astype(np.float64) - update).astype(p.dtype)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


@dataclass
class EpochStats:
    epoch: int
    lr: float
    mean_loss: float
    train_accuracy: float
    batches: int


def _batch_arrays(records: Sequence[FrameRecord], images: list[np.ndarray]):
    x = Tensor(np.stack(images).astype(np.float32))
    y = [r.label for r in records]
    return x, y


def train_epoch(model: Model, manifest: Sequence[FrameRecord], class_weights,
                config: TrainConfig, augment: AugmentConfig, epoch: int,
                optimizer: AdamOptimizer) -> EpochStats:
    if not manifest:
        raise TrainingError("cannot train on an empty manifest")
    lr = lr_at_epoch(config, epoch)
    weights_t = Tensor(np.asarray(class_weights, dtype=np.float32))
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3, epoch]))
    order = rng.permutation(len(manifest))
    loss_sum = 0.0
    correct = 0
    batches = 0
    for start in range(0, len(order), config.batch_size):
        idx = order[start:start + config.batch_size]
        records = [manifest[i] for i in idx]
        images = [load_train_sample(r.path, augment, epoch, int(i)) for r, i in zip(records, idx)]
        x, y = _batch_arrays(records, images)
        logits = model.forward(x, training=True)
        loss = T.weighted_cross_entropy(logits, y, weights_t)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step(lr)
        loss_sum += loss.item() * len(records)
        correct += int((argmax_predictions(logits.data) == np.asarray(y)).sum())
        batches += 1
    n = len(manifest)
    return EpochStats(epoch, lr, loss_sum / n, correct / n, batches)


def evaluate_model(model: Model, manifest: Sequence[FrameRecord],
                   augment: AugmentConfig, batch_size: int = 64) -> MetricsReport:
    """Eval-mode forward over the whole manifest (decode/resize/normalize only)."""
    if not manifest:
        raise TrainingError("cannot evaluate an empty manifest")
    preds: list[int] = []
    labels: list[int] = []
    for start in range(0, len(manifest), batch_size):
        records = manifest[start:start + batch_size]
        images = [load_eval_sample(r.path, augment) for r in records]
        x, y = _batch_arrays(records, images)
        logits = model.forward(x, training=False)
        preds.extend(argmax_predictions(logits.data).tolist())
        labels.extend(y)
    return MetricsReport.from_predictions(preds, labels)


HISTORY_HEADER = ["epoch", "lr", "train_loss", "val_accuracy", "val_macro_f1", "val_score"]


def fit(model: Model, train_manifest, val_manifest, class_weights,
        config: TrainConfig, augment: AugmentConfig, out_dir,
        metadata: Optional[dict[str, str]] = None) -> tuple[str, list[dict]]:
    """Run the full loop; returns (best checkpoint path, history rows).

    Writes history.csv, periodic checkpoints, checkpoint_final.expr1, and
    checkpoint_best.expr1 (highest validation composite score).
    """
    if not train_manifest or not val_manifest:
        raise TrainingError("train and validation manifests must be nonempty")
    os.makedirs(out_dir, exist_ok=True)
    optimizer = AdamOptimizer(model.parameters(), config)
    history: list[dict] = []
    best_score = -1.0
    best_path = os.path.join(out_dir, "checkpoint_best.expr1")
    final_path = os.path.join(out_dir, "checkpoint_final.expr1")
    meta = dict(metadata or {})
    for epoch in range(config.epochs):
        stats = train_epoch(model, train_manifest, class_weights, config, augment, epoch, optimizer)
        report = evaluate_model(model, val_manifest, augment, batch_size=config.batch_size)
        row = {
            "epoch": epoch,
            "lr": stats.lr,
            "train_loss": stats.mean_loss,
            "val_accuracy": report.accuracy,
            "val_macro_f1": report.macro_f1,
            "val_score": report.score,
        }
        history.append(row)
        if report.score > best_score:
            best_score = report.score
            save_checkpoint(model, best_path, {**meta, "best_val_score": f"{report.score:.6f}"})
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            save_checkpoint(model, os.path.join(out_dir, f"checkpoint_epoch{epoch + 1:04d}.expr1"), meta)
    save_checkpoint(model, final_path, meta)
    if config.epochs == 0:
        save_checkpoint(model, best_path, meta)
    write_history(history, os.path.join(out_dir, "history.csv"))
    return best_path, history


def write_history(history: list[dict], path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_HEADER)
        for row in history:
            writer.writerow([row["epoch"], f"{row['lr']:.10g}", f"{row['train_loss']:.10g}",
                             f"{row['val_accuracy']:.10g}", f"{row['val_macro_f1']:.10g}",
                             f"{row['val_score']:.10g}"])
