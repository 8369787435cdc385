"""Confusion-matrix evaluation: accuracy, per-class/macro/weighted F1, and
the composite challenge score 0.33*accuracy + 0.67*macro_F1."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import CLASS_NAMES, NUM_CLASSES

SCORE_ACCURACY_COEFF = 0.33
SCORE_MACRO_F1_COEFF = 0.67


class MetricsError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # 7x7 ints, rows = true label, cols = predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion_matrix(preds: Sequence[int], labels: Sequence[int]) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise MetricsError(f"preds/labels length mismatch: {preds.shape} vs {labels.shape}")
    for name, arr in (("pred", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= NUM_CLASSES):
            raise MetricsError(f"{name} outside [0, {NUM_CLASSES})")
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise MetricsError("accuracy undefined on an empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def f1_scores(cm: ConfusionMatrix) -> tuple[np.ndarray, float, float]:
    """(per_class, macro, weighted). F1 is 0 whenever precision+recall is 0;
    macro averages over all classes regardless of support."""
    if cm.total == 0:
        raise MetricsError("F1 undefined on an empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
        pr = precision + recall
        per_class = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    macro = float(per_class.mean())
    weighted = float((cm.support / cm.total * per_class).sum())
    return per_class, macro, weighted


def abaw2_score(acc: float, macro_f1: float) -> float:
    return SCORE_ACCURACY_COEFF * acc + SCORE_MACRO_F1_COEFF * macro_f1


@dataclass
class MetricsReport:
    confusion: ConfusionMatrix
    accuracy: float
    per_class_f1: np.ndarray
    macro_f1: float
    weighted_f1: float
    score: float
    support: np.ndarray

    @classmethod
    def from_predictions(cls, preds: Sequence[int], labels: Sequence[int]) -> "MetricsReport":
        cm = confusion_matrix(preds, labels)
        acc = accuracy(cm)
        per_class, macro, weighted = f1_scores(cm)
        return cls(cm, acc, per_class, macro, weighted, abaw2_score(acc, macro), cm.support)

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("Overall Accuracy", self.accuracy),
            ("Macro F1 average", self.macro_f1),
            ("Weighted F1 average", self.weighted_f1),
            ("Score", self.score),
        ]

    def as_text(self) -> str:
        lines = [f"{name} = {value:.6f}" for name, value in self.rows()]
        lines.append("")
        lines.append("per-class F1:")
        for name, f1, sup in zip(CLASS_NAMES, self.per_class_f1, self.support):
            lines.append(f"  {name} = {f1:.6f} (support {int(sup)})")
        return "\n".join(lines) + "\n"

    def as_json(self) -> str:
        doc = {name: value for name, value in self.rows()}
        doc["Per-class F1"] = {n: float(f) for n, f in zip(CLASS_NAMES, self.per_class_f1)}
        doc["Support"] = {n: int(s) for n, s in zip(CLASS_NAMES, self.support)}
        doc["Confusion matrix"] = self.confusion.counts.tolist()
        return json.dumps(doc, indent=2) + "\n"


def argmax_predictions(logits: np.ndarray) -> np.ndarray:
    """Row argmax with lowest-index tie-break (numpy's first-occurrence rule)."""
    return logits.argmax(axis=1)
