"""
Confusion matrix and the metrics derived from it.

Rows are actual classes, columns predicted classes. All metrics pool the
pixels of a whole split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from sitswin.errors import DegenerateError, DimensionError, RangeError, UndefinedKappaError

IGNORE_ID = 255


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


class ConfusionMatrix:
    """K x K int64 counts."""

    def __init__(self, num_classes: int, counts: Optional[np.ndarray] = None) -> None:
        if num_classes < 1:
            raise DimensionError(f"ConfusionMatrix: num_classes must be >= 1, got {num_classes}")
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        counts = np.asarray(counts)
        if counts.shape != (num_classes, num_classes):
            raise DimensionError(f"ConfusionMatrix: counts {counts.shape} are not {num_classes}x{num_classes}")
        if not np.issubdtype(counts.dtype, np.integer) or (counts < 0).any():
            raise DimensionError("ConfusionMatrix: counts must be non-negative integers")
        self.num_classes = num_classes
        self.counts = counts.astype(np.int64)

    @classmethod
    def from_counts(cls, counts: Sequence[Sequence[int]]) -> "ConfusionMatrix":
        counts = np.asarray(counts, dtype=np.int64)
        return cls(counts.shape[0], counts)

    def accumulate(self, predicted: np.ndarray, labels: np.ndarray, ignore_id: int = IGNORE_ID) -> "ConfusionMatrix":
        """Add one count per non-ignored pixel at [actual, predicted]; returns self."""
        predicted, labels = np.asarray(predicted), np.asarray(labels)
        if predicted.shape != labels.shape:
            raise DimensionError(f"ConfusionMatrix.accumulate: predicted {predicted.shape} != labels {labels.shape}")
        k = self.num_classes
        scored = labels != ignore_id
        pred = predicted.astype(np.int64)[scored]
        actual = labels.astype(np.int64)[scored]
        for what, ids in (("predicted id", pred), ("label", actual)):
            bad = ids[(ids < 0) | (ids >= k)]
            if bad.size:
                raise RangeError(f"ConfusionMatrix.accumulate: {what} {int(bad[0])} outside [0, {k})")
        self.counts += np.bincount(actual * k + pred, minlength=k * k).reshape(k, k)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise DimensionError(f"ConfusionMatrix.merge: {self.num_classes} vs {other.num_classes} classes")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    __add__ = merge

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        return f"ConfusionMatrix(num_classes={self.num_classes}, total={self.total})"

    # ---- Metrics ----

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def disagreements(self) -> int:
        return self.total - int(np.trace(self.counts))

    def _require_counts(self, what: str) -> int:
        total = self.total
        if total == 0:
            raise DegenerateError(f"ConfusionMatrix.{what}: no scored pixels")
        return total

    def overall_accuracy(self) -> float:
        total = self._require_counts("overall_accuracy")
        return int(np.trace(self.counts)) / total

    def cohen_kappa(self) -> float:
        """(p_o - p_e) / (1 - p_e), evaluated in exact integer arithmetic until the last division."""
        n = self._require_counts("cohen_kappa")
        agreed = int(np.trace(self.counts))
        rows = [int(v) for v in self.counts.sum(axis=1)]
        cols = [int(v) for v in self.counts.sum(axis=0)]
        chance = sum(r * c for r, c in zip(rows, cols))
        if chance == n * n:
            raise UndefinedKappaError("ConfusionMatrix.cohen_kappa: chance agreement is 1, kappa is undefined")
        return (n * agreed - chance) / (n * n - chance)

    def per_class_prf(self) -> List[ClassMetrics]:
        """Precision, recall and F1 per class; empty denominators give 0."""
        self._require_counts("per_class_prf")
        rows = self.counts.sum(axis=1)
        cols = self.counts.sum(axis=0)
        result = []
        for k in range(self.num_classes):
            hit = int(self.counts[k, k])
            precision = hit / int(cols[k]) if cols[k] else 0.0
            recall = hit / int(rows[k]) if rows[k] else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            result.append(ClassMetrics(precision, recall, f1, int(rows[k])))
        return result


def accumulate(cm: ConfusionMatrix, predicted: np.ndarray, labels: np.ndarray, ignore_id: int = IGNORE_ID) -> ConfusionMatrix:
    return cm.accumulate(predicted, labels, ignore_id)


def overall_accuracy(cm: ConfusionMatrix) -> float:
    return cm.overall_accuracy()


def cohen_kappa(cm: ConfusionMatrix) -> float:
    return cm.cohen_kappa()


def per_class_prf(cm: ConfusionMatrix) -> List[ClassMetrics]:
    return cm.per_class_prf()


def weighted_average(metrics: Sequence[ClassMetrics], supports: Optional[Sequence[int]] = None) -> Tuple[float, float, float]:
    """Support-weighted mean precision, recall and F1."""
    weights = np.asarray([m.support for m in metrics] if supports is None else supports, dtype=np.float64)
    if len(weights) != len(metrics):
        raise DimensionError(f"weighted_average: {len(metrics)} metrics but {len(weights)} supports")
    total = weights.sum()
    if total <= 0:
        raise DegenerateError("weighted_average: total support is zero")
    p, r, f = (np.asarray([getattr(m, name) for m in metrics]) for name in ("precision", "recall", "f1"))
    return float(p @ weights / total), float(r @ weights / total), float(f @ weights / total)
