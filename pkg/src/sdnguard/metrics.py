"""Confusion-matrix metrics: accuracy, binary F1, macro F1."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Metrics:
    accuracy: float
    f1: float
    confusion_matrix: np.ndarray
    labels: list
    per_class_f1: dict = field(default_factory=dict)
    averaging: str = "macro"
    degenerate: bool = False


def confusion_matrix(pred, truth, labels):
    pos = {lab: i for i, lab in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for p, t in zip(pred, truth):
        cm[pos[t], pos[p]] += 1
    return cm


def _f1_from_cm(cm, k):
    tp = cm[k, k]
    fp = cm[:, k].sum() - tp
    fn = cm[k, :].sum() - tp
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else float(2 * tp / denom)


def evaluate(pred, truth, positive_class=None, labels=None) -> Metrics:
    """Rows of the confusion matrix are truth, columns predictions.

    With ``positive_class`` the F1 is the binary F1 of that class; otherwise
    it is the macro average over ``labels`` (default: every label seen), a
    label with no support and no predictions contributing 0.
    """
    pred = [int(v) for v in pred]
    truth = [int(v) for v in truth]
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(truth)} labels")
    if not pred:
        raise ValueError("cannot evaluate an empty prediction set")
    if labels is None:
        labels = sorted(set(pred) | set(truth) | ({int(positive_class)} if positive_class is not None else set()))
    labels = [int(v) for v in labels]
    unknown = (set(pred) | set(truth)) - set(labels)
    if unknown:
        raise ValueError(f"labels {sorted(unknown)} are not in the label set")
    cm = confusion_matrix(pred, truth, labels)
    accuracy = float(np.trace(cm)) / float(cm.sum())
    per_class = {lab: _f1_from_cm(cm, k) for k, lab in enumerate(labels)}
    if positive_class is not None:
        f1 = per_class[int(positive_class)]
        averaging = "binary"
    else:
        f1 = float(np.mean(list(per_class.values())))
        averaging = "macro"
    return Metrics(accuracy, f1, cm, labels, per_class, averaging)
