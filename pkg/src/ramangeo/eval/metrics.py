"""Confusion matrices, per-class metrics, and fold aggregation."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

METRICS = ("precision", "recall", "f1")


@dataclass
class ConfusionMatrix:
    """Integer counts indexed ``[true][predicted]``."""

    counts: np.ndarray
    labels: list[str]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.labels)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts shape {self.counts.shape} does not match {k} labels")
        if (self.counts < 0).any():
            raise ValueError("negative counts")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(predictions, targets, labels: Sequence[str]) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    true = np.asarray(targets, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise ValueError(f"{pred.size} predictions for {true.size} targets")
    k = len(labels)
    for name, arr in (("prediction", pred), ("target", true)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise IndexError(f"{name} index out of range for {k} classes")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true, pred), 1)
    return ConfusionMatrix(counts, list(labels))


@dataclass
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int
    # a metric whose denominator is zero is reported as 0 and flagged here
    undefined: list[str] = field(default_factory=list)


@dataclass
class MetricsReport:
    labels: list[str]
    per_class: list[ClassMetrics]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    total: int
    fold: int | None = None
    loss: float | None = None

    def column(self, metric: str) -> np.ndarray:
        return np.array([getattr(c, metric) for c in self.per_class], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "labels": list(self.labels),
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "loss": self.loss,
            "total": self.total,
            "per_class": [
                {
                    "label": c.label,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                    "undefined": list(c.undefined),
                }
                for c in self.per_class
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        per_class = [
            ClassMetrics(c["label"], c["precision"], c["recall"], c["f1"], c["support"], list(c["undefined"]))
            for c in d["per_class"]
        ]
        return cls(
            labels=list(d["labels"]),
            per_class=per_class,
            accuracy=d["accuracy"],
            macro_precision=d["macro_precision"],
            macro_recall=d["macro_recall"],
            macro_f1=d["macro_f1"],
            total=d["total"],
            fold=d.get("fold"),
            loss=d.get("loss"),
        )


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den > 0 else (0.0, True)


def _macro(per_class: list[ClassMetrics], metric: str) -> float:
    vals = [getattr(c, metric) for c in per_class if c.support > 0]
    return float(np.mean(vals)) if vals else 0.0


def per_class_metrics(cm: ConfusionMatrix, fold: int | None = None, loss: float | None = None) -> MetricsReport:
    """Precision, recall and F1 per class.

    Macro averages only include classes with nonzero support.
    """
    total = cm.total
    if total == 0:
        raise ValueError("empty confusion matrix")
    c = cm.counts
    tp = np.diag(c)
    predicted = c.sum(axis=0)
    actual = c.sum(axis=1)
    rows = []
    for i, label in enumerate(cm.labels):
        undefined = []
        p, bad = _ratio(int(tp[i]), int(predicted[i]))
        if bad:
            undefined.append("precision")
        r, bad = _ratio(int(tp[i]), int(actual[i]))
        if bad:
            undefined.append("recall")
        if p + r > 0:
            f1 = 2 * p * r / (p + r)
        else:
            f1 = 0.0
            undefined.append("f1")
        rows.append(ClassMetrics(label, p, r, f1, int(actual[i]), undefined))
    return MetricsReport(
        labels=list(cm.labels),
        per_class=rows,
        accuracy=int(tp.sum()) / total,
        macro_precision=_macro(rows, "precision"),
        macro_recall=_macro(rows, "recall"),
        macro_f1=_macro(rows, "f1"),
        total=total,
        fold=fold,
        loss=loss,
    )


@dataclass
class FoldAggregate:
    """Elementwise mean and population std of per-fold reports.

    ``per_class_folds[i]`` counts the folds in which class ``i`` had support;
    only those folds contribute to that class's statistics. ``support`` in
    the mean and std reports is the summed support over all folds.
    """

    mean: MetricsReport
    std: MetricsReport
    n_folds: int
    per_class_folds: list[int]

    def to_dict(self) -> dict:
        return {
            "n_folds": self.n_folds,
            "per_class_folds": list(self.per_class_folds),
            "mean": self.mean.to_dict(),
            "std": self.std.to_dict(),
        }


def aggregate_folds(reports: Sequence[MetricsReport]) -> FoldAggregate:
    if not reports:
        raise ValueError("no reports to aggregate")
    labels = reports[0].labels
    for r in reports[1:]:
        if r.labels != labels:
            raise ValueError("reports have mismatched class lists")

    def stat(values) -> tuple[float, float]:
        # statistics works in exact arithmetic, so identical values give std exactly 0
        vals = [float(v) for v in values]
        return statistics.fmean(vals), statistics.pstdev(vals)

    mean_cls, std_cls, n_present = [], [], []
    for i, label in enumerate(labels):
        present = [r.per_class[i] for r in reports if r.per_class[i].support > 0]
        support = int(sum(r.per_class[i].support for r in reports))
        n_present.append(len(present))
        if not present:
            flags = list(METRICS)
            mean_cls.append(ClassMetrics(label, 0.0, 0.0, 0.0, support, flags))
            std_cls.append(ClassMetrics(label, 0.0, 0.0, 0.0, support, list(flags)))
            continue
        m, s = {}, {}
        for metric in METRICS:
            m[metric], s[metric] = stat([getattr(c, metric) for c in present])
        flags = sorted({f for c in present for f in c.undefined})
        mean_cls.append(ClassMetrics(label, m["precision"], m["recall"], m["f1"], support, flags))
        std_cls.append(ClassMetrics(label, s["precision"], s["recall"], s["f1"], support, list(flags)))

    overall = {}
    for key in ("accuracy", "macro_precision", "macro_recall", "macro_f1"):
        overall[key] = stat([getattr(r, key) for r in reports])
    losses = [r.loss for r in reports if r.loss is not None]
    loss_stat = stat(losses) if losses else (None, None)
    total = int(sum(r.total for r in reports))

    def build(idx, per_class):
        return MetricsReport(
            labels=list(labels),
            per_class=per_class,
            accuracy=overall["accuracy"][idx],
            macro_precision=overall["macro_precision"][idx],
            macro_recall=overall["macro_recall"][idx],
            macro_f1=overall["macro_f1"][idx],
            total=total,
            loss=loss_stat[idx],
        )

    return FoldAggregate(build(0, mean_cls), build(1, std_cls), len(reports), n_present)


def aggregate_from_dict(d: dict) -> FoldAggregate:
    return FoldAggregate(
        MetricsReport.from_dict(d["mean"]), MetricsReport.from_dict(d["std"]), d["n_folds"], list(d["per_class_folds"])
    )
