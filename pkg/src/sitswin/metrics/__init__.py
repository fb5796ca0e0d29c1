"""Confusion matrix, accuracy, kappa, per-class scores and the text report."""

from sitswin.metrics.confusion import (
    ClassMetrics,
    ConfusionMatrix,
    accumulate,
    cohen_kappa,
    overall_accuracy,
    per_class_prf,
    weighted_average,
)
from sitswin.metrics.report import format_report
from sitswin.metrics.evaluate import evaluate

__all__ = [
    "ClassMetrics",
    "ConfusionMatrix",
    "accumulate",
    "cohen_kappa",
    "overall_accuracy",
    "per_class_prf",
    "weighted_average",
    "format_report",
    "evaluate",
]
