"""Micro-averaged precision/recall/F1 with gold-side label exclusion.

Instances whose gold label is excluded (e.g. Vague) are dropped from
scoring.  On a retained instance, predicting an excluded label counts as a
miss for the gold class and is not a false positive for any scored class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Metrics:
    precision: float
    recall: float
    micro_f1: float
    confusion: np.ndarray  # [n_labels, n_labels], rows gold, columns predicted, retained instances only
    n_evaluated: int
    n_excluded: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "micro_f1": self.micro_f1,
            "n_evaluated": self.n_evaluated,
            "n_excluded": self.n_excluded,
            "confusion": self.confusion.tolist(),
        }


def metrics_from_confusion(confusion: np.ndarray, excluded=(), n_excluded: int = 0) -> Metrics:
    confusion = np.asarray(confusion, dtype=np.int64)
    scored = np.ones(confusion.shape[0], dtype=bool)
    scored[list(excluded)] = False
    tp = int(np.trace(confusion))
    predicted = int(confusion[:, scored].sum())
    retained = int(confusion.sum())
    precision = tp / predicted if predicted else 0.0
    recall = tp / retained if retained else 0.0
    # 2PR / (P + R) reduces to one division, which keeps F1 correctly rounded
    f1 = 2 * tp / (predicted + retained) if tp else 0.0
    return Metrics(precision, recall, f1, confusion, retained, n_excluded)


def compute_metrics(gold, pred, n_labels: int, excluded=()) -> Metrics:
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise ValueError(f"gold and predictions differ in length: {gold.shape} vs {pred.shape}")
    excluded = sorted(set(int(e) for e in excluded))
    keep = ~np.isin(gold, excluded)
    confusion = np.zeros((n_labels, n_labels), dtype=np.int64)
    np.add.at(confusion, (gold[keep], pred[keep]), 1)
    return metrics_from_confusion(confusion, excluded, int((~keep).sum()))


def accuracy(gold, pred) -> float:
    gold, pred = np.asarray(gold), np.asarray(pred)
    return float((gold == pred).mean()) if gold.size else 0.0
