"""Confusion matrix and the four imbalanced-classification scores.

Skip is the positive class throughout. AUC here is the balanced form
computed from hard predictions, (1 + TPR - FPR) / 2, not a ranking AUC.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

REPORT_HEADER = ["project", "split", "precision", "recall", "f1", "auc"]


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise MetricsError(f"negative count in {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class EvalScores:
    precision: float
    recall: float
    f1: float
    auc: float

    def as_percentages(self) -> dict:
        return {k: int(round(100 * getattr(self, k))) for k in ("precision", "recall", "f1", "auc")}


def confusion(predicted, actual) -> ConfusionMatrix:
    pred = np.asarray(predicted, dtype=np.int64).ravel()
    act = np.asarray(actual, dtype=np.int64).ravel()
    if pred.shape != act.shape:
        raise MetricsError(f"length mismatch: {len(pred)} predictions vs {len(act)} labels")
    if len(pred) == 0:
        raise MetricsError("empty input")
    tp = int(np.sum((pred == 1) & (act == 1)))
    fp = int(np.sum((pred == 1) & (act == 0)))
    fn = int(np.sum((pred == 0) & (act == 1)))
    return ConfusionMatrix(tp, fp, fn, len(pred) - tp - fp - fn)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def scores(cm: ConfusionMatrix) -> EvalScores:
    if cm.tp + cm.fn == 0 or cm.fp + cm.tn == 0:
        raise MetricsError(f"both classes must be present in the ground truth: {cm}")
    recall = cm.tp / (cm.tp + cm.fn)
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    fpr = cm.fp / (cm.fp + cm.tn)
    return EvalScores(precision, recall, f1_score(precision, recall), (1 + recall - fpr) / 2)


def f1_of(predicted, actual) -> float:
    """F1 straight from label arrays; 0 when there are no true or predicted skips."""
    cm = confusion(predicted, actual)
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    return f1_score(precision, recall)


def report_row(project: str, split: str, s: EvalScores) -> list:
    return [project, split, f"{s.precision:.6f}", f"{s.recall:.6f}", f"{s.f1:.6f}", f"{s.auc:.6f}"]


def write_report(path, rows):
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        w.writerows(rows)


def format_percent_line(project: str, split: str, s: EvalScores) -> str:
    p = s.as_percentages()
    return (f"{project:<24} {split:<10} precision={p['precision']:3d}% recall={p['recall']:3d}% "
            f"f1={p['f1']:3d}% auc={p['auc']:3d}%")
