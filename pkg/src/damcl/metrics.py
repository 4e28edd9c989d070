"""Classification scoring: confusion matrices, macro-F1, average accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import ItemSet, NetParams, PatternLayout, classify


@dataclass
class TaskScore:
    task_id: int
    confusion: np.ndarray  # (10, 10) counts, rows = true class
    macro_f1: float


def confusion_matrix(true_labels, pred_labels, n_classes: int = 10) -> np.ndarray:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(true_labels), np.asarray(pred_labels)), 1)
    return counts


def macro_f1_from_confusion(confusion: np.ndarray) -> float:
    """Unweighted mean over classes of 2TP/(2TP+FP+FN).

    A class with no true and no predicted instances scores 0. The mean is an
    exactly-rounded sum (math.fsum) divided by the class count.
    """
    confusion = np.asarray(confusion)
    scores = []
    for c in range(confusion.shape[0]):
        tp = int(confusion[c, c])
        fn = int(confusion[c].sum()) - tp
        fp = int(confusion[:, c].sum()) - tp
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return math.fsum(scores) / confusion.shape[0]


def evaluate_task(
    val: ItemSet,
    bank: np.ndarray,
    params: NetParams,
    layout: PatternLayout,
    beta: float | None = None,
    task_id: int = 0,
) -> TaskScore:
    """Score a validation split: classify, argmax (ties to the lowest class),
    tally the confusion matrix, and compute macro-F1."""
    if len(val) == 0:
        raise ValueError("validation split must not be empty")
    logits = classify(val.x, bank, params, layout, beta)
    pred = np.argmax(logits, axis=1)
    true = np.argmax(val.y, axis=1)
    confusion = confusion_matrix(true, pred, layout.class_count)
    return TaskScore(task_id, confusion, macro_f1_from_confusion(confusion))


def average_accuracy(scores: list[float]) -> float:
    """Unweighted mean of per-task scores seen so far."""
    if not scores:
        raise ValueError("need at least one task score")
    return math.fsum(scores) / len(scores)
