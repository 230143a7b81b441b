"""Confusion matrices, classification scores and history export.

The positive class is *fake* (a detected presentation attack).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .errors import InvalidArgumentError

if TYPE_CHECKING:
    from .training import TrainHistory

HISTORY_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: float
    recall: float
    f1: float
    threshold: float = 0.5
    degenerate: bool = False

    def to_dict(self) -> dict:
        c = self.confusion
        return {
            "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1,
            "threshold": self.threshold, "degenerate": self.degenerate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.to_dict().items())


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def confusion_from_predictions(preds: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> ConfusionMatrix:
    """Tally predictions; ``p >= threshold`` counts as fake."""
    preds, labels = list(preds), list(labels)
    if len(preds) != len(labels):
        raise InvalidArgumentError(f"{len(preds)} predictions but {len(labels)} labels")
    if not preds:
        raise InvalidArgumentError("no predictions")
    tp = fp = fn = tn = 0
    for p, y in zip(preds, labels):
        if y not in (0, 1):
            raise InvalidArgumentError(f"label must be 0 or 1, got {y!r}")
        positive = p >= threshold
        if positive and y == 1:
            tp += 1
        elif positive:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def compute_metrics(cm: ConfusionMatrix, threshold: float = 0.5) -> MetricsReport:
    if cm.total < 1:
        raise InvalidArgumentError("confusion matrix is empty")
    degenerate = False

    def ratio(num, den):
        nonlocal degenerate
        if den == 0:
            degenerate = True
            return 0.0
        return num / den

    accuracy = (cm.tp + cm.tn) / cm.total
    precision = ratio(cm.tp, cm.tp + cm.fp)
    recall = ratio(cm.tp, cm.tp + cm.fn)
    if precision + recall == 0:
        degenerate = True
    return MetricsReport(cm, accuracy, precision, recall, f1_score(precision, recall), threshold, degenerate)


def history_to_csv(history: "TrainHistory", path) -> None:
    if len(history) == 0:
        raise InvalidArgumentError("history is empty")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for r in history:
            w.writerow([r.epoch] + [
                "nan" if math.isnan(v) else f"{v:.6f}"
                for v in (r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy)
            ])


def history_from_csv(path) -> "TrainHistory":
    from .training import EpochRecord, TrainHistory

    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != HISTORY_HEADER:
            raise InvalidArgumentError(f"{path}: not a history CSV")
        records = [EpochRecord(int(row[0]), *(float(v) for v in row[1:])) for row in reader if row]
    return TrainHistory(records)
