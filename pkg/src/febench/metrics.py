"""Accuracy, micro precision/recall/F1, label density, run aggregation.

Micro averaging sums true/false positives and false negatives over every
document and class before forming ratios; degenerate 0/0 ratios are defined
as 0 so early epochs with empty predictions stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_paired(predictions, golds):
    if len(predictions) != len(golds):
        raise ValueError(
            f"{len(predictions)} predictions against {len(golds)} golds")


def accuracy(predictions, golds):
    """Fraction of positions where prediction equals gold exactly."""
    _check_paired(predictions, golds)
    if not golds:
        raise ValueError("accuracy of an empty evaluation is undefined")
    hits = sum(1 for p, g in zip(predictions, golds) if p == g)
    return hits / len(golds)


@dataclass(frozen=True)
class ConfusionTotals:
    """Micro-summed confusion counts over all documents and classes."""

    true_positive: int = 0
    false_positive: int = 0
    false_negative: int = 0

    def __add__(self, other):
        return ConfusionTotals(
            self.true_positive + other.true_positive,
            self.false_positive + other.false_positive,
            self.false_negative + other.false_negative)

    @classmethod
    def from_sets(cls, pred_set, gold_set):
        pred_set, gold_set = set(pred_set), set(gold_set)
        return cls(true_positive=len(pred_set & gold_set),
                   false_positive=len(pred_set - gold_set),
                   false_negative=len(gold_set - pred_set))

    def precision(self):
        denom = self.true_positive + self.false_positive
        return self.true_positive / denom if denom else 0.0

    def recall(self):
        denom = self.true_positive + self.false_negative
        return self.true_positive / denom if denom else 0.0

    def f1(self):
        p, r = self.precision(), self.recall()
        return 2 * p * r / (p + r) if p + r else 0.0


def micro_prf(pred_sets, gold_sets):
    """(precision, recall, F1) from confusion totals summed over documents."""
    _check_paired(pred_sets, gold_sets)
    totals = ConfusionTotals()
    for pred, gold in zip(pred_sets, gold_sets):
        totals = totals + ConfusionTotals.from_sets(pred, gold)
    return totals.precision(), totals.recall(), totals.f1()


def label_density(dataset):
    """Mean gold labels per example over train and test together."""
    examples = [*dataset.train, *dataset.test]
    if not examples:
        raise ValueError("label density of an empty dataset is undefined")
    return sum(len(ex.labels) for ex in examples) / len(examples)


def mean_std(values):
    """Mean and population standard deviation of a value sequence."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot aggregate zero values")
    return float(arr.mean()), float(arr.std())
