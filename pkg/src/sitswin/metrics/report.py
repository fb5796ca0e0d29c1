"""
Plain-text evaluation report.

One row per class with P, R, F1 and the pixel support, a support-weighted
average row, then overall accuracy and kappa as percentages. Several splits
can be reported side by side, one column group each.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

from sitswin.errors import DegenerateError, DimensionError
from sitswin.metrics.confusion import ConfusionMatrix, weighted_average

_NAME_WIDTH = 20
_GROUP = "{:>7}{:>7}{:>7}{:>10}"


def _percent(value: float) -> str:
    return f"{100.0 * value:.2f}%"


def format_report(columns: Sequence[Tuple[str, ConfusionMatrix]], class_names: Sequence[str]) -> str:
    """Render `(title, matrix)` column groups for the classes of the class table."""
    if not columns:
        raise DimensionError("format_report: no columns to report")
    for title, cm in columns:
        if cm.num_classes != len(class_names):
            raise DimensionError(f"format_report: '{title}' has {cm.num_classes} classes, class table has {len(class_names)}")
    width = _NAME_WIDTH
    group_width = len(_GROUP.format("", "", "", ""))
    metrics = [cm.per_class_prf() for _, cm in columns]

    lines: List[str] = []
    lines.append(" " * width + "".join(f"{title:>{group_width}}" for title, _ in columns))
    lines.append(f"{'class':<{width}}" + _GROUP.format("P", "R", "F1", "#pix") * len(columns))
    for k, name in enumerate(class_names):
        cells = "".join(
            _GROUP.format(f"{m[k].precision:.2f}", f"{m[k].recall:.2f}", f"{m[k].f1:.2f}", m[k].support) for m in metrics
        )
        lines.append(f"{name:<{width}}" + cells)
    averages = []
    for (_, cm), m in zip(columns, metrics):
        p, r, f = weighted_average(m)
        averages.append(_GROUP.format(f"{p:.2f}", f"{r:.2f}", f"{f:.2f}", cm.total))
    lines.append(f"{'weighted avg.':<{width}}" + "".join(averages))
    lines.append("")
    lines.append(f"{'Overall Accuracy':<{width}}" + "".join(f"{_percent(cm.overall_accuracy()):>{group_width}}" for _, cm in columns))
    kappas = []
    for _, cm in columns:
        try:
            kappas.append(_percent(cm.cohen_kappa()))
        except DegenerateError:
            kappas.append("undefined")
    lines.append(f"{'Overall Kappa':<{width}}" + "".join(f"{k:>{group_width}}" for k in kappas))
    return "\n".join(lines) + "\n"
