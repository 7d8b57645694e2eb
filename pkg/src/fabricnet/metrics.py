"""Confusion matrix, the binary metric formulas, and report emission.

Multi-class metrics come from a one-vs-rest reduction of the confusion
matrix. Degenerate counts (0/0) report as undefined (None) rather than being
coerced, and macro averages skip undefined entries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CLASS_NAMES
from .errors import DataError, StorageError


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are true classes, columns are predicted classes."""

    counts: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise DataError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise DataError("confusion matrix counts must be non-negative")
        k = self.counts.shape[0]
        if not self.names:
            self.names = CLASS_NAMES if k == len(CLASS_NAMES) else tuple(
                f"class_{i}" for i in range(k)
            )
        if len(self.names) != k:
            raise DataError(f"{k}x{k} matrix needs {k} class names, got {len(self.names)}")

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, cls: int) -> tuple[int, int, int, int]:
        """(tp, tn, fp, fn) treating `cls` as positive and the rest as negative."""
        tp = int(self.counts[cls, cls])
        fn = int(self.counts[cls].sum() - tp)
        fp = int(self.counts[:, cls].sum() - tp)
        tn = self.total - tp - fn - fp
        return tp, tn, fp, fn


def confusion(preds, truths, k: int) -> ConfusionMatrix:
    """Tally predicted vs true labels into a K x K matrix."""
    preds = [int(p) for p in preds]
    truths = [int(t) for t in truths]
    if len(preds) != len(truths):
        raise DataError(f"{len(preds)} predictions vs {len(truths)} truths")
    counts = np.zeros((k, k), dtype=np.int64)
    for p, t in zip(preds, truths):
        if not (0 <= p < k) or not (0 <= t < k):
            raise DataError(f"label out of range [0, {k}): pred={p}, truth={t}")
        counts[t, p] += 1
    return ConfusionMatrix(counts=counts)


def binary_metrics(tp: int, tn: int, fp: int, fn: int
                   ) -> tuple[float | None, float | None, float | None]:
    """(accuracy, precision, recall); any zero-denominator entry is None."""
    if min(tp, tn, fp, fn) < 0:
        raise DataError("counts must be non-negative")
    total = tp + tn + fp + fn
    accuracy = (tp + tn) / total if total else None
    precision = tp / (tp + fp) if (tp + fp) else None
    recall = tp / (tp + fn) if (tp + fn) else None
    return accuracy, precision, recall


@dataclass
class ClassReport:
    name: str
    precision: float | None
    recall: float | None
    accuracy: float | None  # per-class accuracy := recall of that row
    gmean: float | None


@dataclass
class MetricReport:
    overall_accuracy: float
    per_class: list[ClassReport] = field(default_factory=list)
    macro_precision: float | None = None
    macro_recall: float | None = None
    macro_gmean: float | None = None

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_gmean": self.macro_gmean,
            "per_class": [
                {
                    "name": c.name,
                    "precision": c.precision,
                    "recall": c.recall,
                    "accuracy": c.accuracy,
                    "gmean": c.gmean,
                }
                for c in self.per_class
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            overall_accuracy=d["overall_accuracy"],
            macro_precision=d["macro_precision"],
            macro_recall=d["macro_recall"],
            macro_gmean=d["macro_gmean"],
            per_class=[ClassReport(**c) for c in d["per_class"]],
        )


def _mean_defined(values: list[float | None]) -> float | None:
    defined = [v for v in values if v is not None]
    return sum(defined) / len(defined) if defined else None


def report(cm: ConfusionMatrix) -> MetricReport:
    """Full metric suite from a confusion matrix via one-vs-rest reduction."""
    if cm.total == 0:
        raise DataError("cannot report on an empty confusion matrix")
    per_class: list[ClassReport] = []
    for i in range(cm.k):
        tp, tn, fp, fn = cm.one_vs_rest(i)
        _, precision, recall = binary_metrics(tp, tn, fp, fn)
        gmean = (
            math.sqrt(precision * recall)
            if precision is not None and recall is not None
            else None
        )
        per_class.append(ClassReport(
            name=cm.names[i],
            precision=precision,
            recall=recall,
            accuracy=recall,
            gmean=gmean,
        ))
    return MetricReport(
        overall_accuracy=float(np.trace(cm.counts)) / cm.total,
        per_class=per_class,
        macro_precision=_mean_defined([c.precision for c in per_class]),
        macro_recall=_mean_defined([c.recall for c in per_class]),
        macro_gmean=_mean_defined([c.gmean for c in per_class]),
    )


def confusion_csv(cm: ConfusionMatrix) -> str:
    lines = ["true_class," + ",".join(cm.names)]
    for i in range(cm.k):
        lines.append(cm.names[i] + "," + ",".join(str(int(v)) for v in cm.counts[i]))
    return "\n".join(lines) + "\n"


def metrics_json(rep: MetricReport, cm: ConfusionMatrix) -> str:
    payload = {
        "metrics": rep.to_dict(),
        "confusion": {
            "names": list(cm.names),
            "counts": cm.counts.tolist(),
        },
    }
    return json.dumps(payload, indent=2) + "\n"


def emit(rep: MetricReport, cm: ConfusionMatrix, trainlog, out_dir: str | Path
         ) -> list[Path]:
    """Write metrics.json and confusion.csv, plus curves.csv when a log is given.

    Key order and float formatting are fixed, so identical inputs produce
    byte-identical files.
    """
    out = Path(out_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        target = out / "metrics.json"
        target.write_text(metrics_json(rep, cm), encoding="utf-8")
        written.append(target)
        target = out / "confusion.csv"
        target.write_text(confusion_csv(cm), encoding="utf-8")
        written.append(target)
        if trainlog is not None:
            target = out / "curves.csv"
            target.write_text(trainlog.to_csv(), encoding="utf-8")
            written.append(target)
    except OSError as exc:
        raise StorageError(f"cannot write report under {out}: {exc}") from exc
    return written


def parse_metrics_json(text: str) -> tuple[MetricReport, ConfusionMatrix]:
    payload = json.loads(text)
    rep = MetricReport.from_dict(payload["metrics"])
    cm = ConfusionMatrix(
        counts=np.asarray(payload["confusion"]["counts"], dtype=np.int64),
        names=tuple(payload["confusion"]["names"]),
    )
    return rep, cm
