"""Confusion matrices and the derived classification scores."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyMatrix, LabelOutOfRange, LengthMismatch


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns are predictions."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(truth, predicted, n: int, class_names=None) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise LengthMismatch(f"{truth.size} true labels vs {predicted.size} predictions")
    for arr in (truth, predicted):
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise LabelOutOfRange(f"labels must lie in [0, {n})")
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (truth, predicted), 1)
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(n))
    return ConfusionMatrix(counts, names)


@dataclass(frozen=True)
class MetricsReport:
    class_names: tuple[str, ...]
    confusion: list[list[int]]
    accuracy: float
    weighted_accuracy: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    sensitivity: float
    specificity: float
    icbhi_score: float
    healthy_index: int
    total: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    def to_text(self) -> str:
        width = max(12, max(len(c) for c in self.class_names) + 2)
        lines = [f"{'class':<{width}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}"]
        for i, name in enumerate(self.class_names):
            support = sum(self.confusion[i])
            lines.append(f"{name:<{width}}{self.precision[i]:>10.4f}{self.recall[i]:>10.4f}"
                         f"{self.f1[i]:>10.4f}{support:>10d}")
        lines.append(f"{'macro':<{width}}{self.macro_precision:>10.4f}{self.macro_recall:>10.4f}"
                     f"{self.macro_f1:>10.4f}{self.total:>10d}")
        lines.append("")
        for label, value in (("accuracy", self.accuracy),
                             ("weighted accuracy", self.weighted_accuracy),
                             ("sensitivity", self.sensitivity),
                             ("specificity", self.specificity),
                             ("ICBHI score", self.icbhi_score)):
            lines.append(f"{label:<20}{value:.4f}")
        return "\n".join(lines)


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros(len(num)), where=den > 0)


def report(cm: ConfusionMatrix, healthy_index: int = 0) -> MetricsReport:
    """Scores from a confusion matrix.

    Specificity is the recall of the healthy class; sensitivity is the
    support-weighted recall over all other classes. Empty rows or columns give
    zero recall or precision instead of dividing by zero.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise EmptyMatrix("confusion matrix has no samples")
    if not 0 <= healthy_index < cm.n:
        raise LabelOutOfRange(f"healthy index {healthy_index} outside [0, {cm.n})")
    tp = np.diag(counts)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    recall = _ratio(tp, support)
    precision = _ratio(tp, predicted)
    f1 = _ratio(2 * precision * recall, precision + recall)

    abnormal = np.arange(cm.n) != healthy_index
    abnormal_support = support[abnormal].sum()
    sensitivity = float(tp[abnormal].sum() / abnormal_support) if abnormal_support > 0 else 0.0
    specificity = float(recall[healthy_index])

    return MetricsReport(
        class_names=cm.class_names,
        confusion=cm.counts.tolist(),
        accuracy=float(tp.sum() / total),
        weighted_accuracy=float((support * recall).sum() / total),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        sensitivity=sensitivity,
        specificity=specificity,
        icbhi_score=(sensitivity + specificity) / 2,
        healthy_index=healthy_index,
        total=int(total),
    )
