"""Confusion matrices, per-class scores, one-vs-rest ROC/PR curves and the
binary fault-detection accuracy."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .degradation import DegradationMode
from .fileio import atomic_write_text

N_CLASSES = len(DegradationMode)


class CurveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true modes, columns predicted modes."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class ClassMetrics:
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float


@dataclass(frozen=True, eq=False)
class CurvePoints:
    kind: str  # "roc" (x=FPR, y=TPR) or "pr" (x=recall, y=precision)
    positive_class: int
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray
    auc: float


def _codes(labels) -> np.ndarray:
    arr = np.asarray(labels, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= N_CLASSES):
        raise ValueError(f"labels must be mode codes 0..{N_CLASSES - 1}")
    return arr


def confusion_matrix(true_labels, predicted_labels) -> ConfusionMatrix:
    t, p = _codes(true_labels), _codes(predicted_labels)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} true vs {p.shape} predicted")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den > 0 else 0.0


def class_metrics(cm: ConfusionMatrix) -> ClassMetrics:
    """Per-class P/R/F1 (zero whenever a denominator is zero), macro means, accuracy."""
    c = cm.counts.astype(float)
    if c.sum() <= 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(c)
    precision = [_ratio(tp[k], c[:, k].sum()) for k in range(N_CLASSES)]
    recall = [_ratio(tp[k], c[k].sum()) for k in range(N_CLASSES)]
    f1 = [_ratio(2 * p * r, p + r) for p, r in zip(precision, recall)]
    return ClassMetrics(
        tuple(precision),
        tuple(recall),
        tuple(f1),
        float(np.mean(precision)),
        float(np.mean(recall)),
        float(np.mean(f1)),
        float(tp.sum() / c.sum()),
    )


def accuracy(true_labels, predicted_labels) -> float:
    return class_metrics(confusion_matrix(true_labels, predicted_labels)).accuracy


def fault_accuracy(true_labels, predicted_labels) -> float:
    """Accuracy of the binary normal-vs-any-fault decision."""
    t, p = _codes(true_labels), _codes(predicted_labels)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} true vs {p.shape} predicted")
    return float(np.mean((t != DegradationMode.NORMAL) == (p != DegradationMode.NORMAL)))


def _one_vs_rest(true_labels, scores, positive_class: int):
    t = _codes(true_labels)
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        s = s[:, positive_class]
    if s.shape != t.shape:
        raise ValueError("scores and labels must align")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    pos = t == positive_class
    if pos.all() or not pos.any():
        raise CurveError(f"class {positive_class} needs at least one positive and one negative sample")
    # Sweep distinct thresholds from the top; tied scores enter together.
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    last_of_group = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tps = np.cumsum(pos)[last_of_group].astype(float)
    fps = (last_of_group + 1) - tps
    return tps, fps, s[last_of_group], pos.sum(), (~pos).sum()


def roc_curve(true_labels, scores, positive_class: int) -> CurvePoints:
    """One-vs-rest ROC; AUC by the trapezoid rule, which equals Mann-Whitney U."""
    tps, fps, thr, n_pos, n_neg = _one_vs_rest(true_labels, scores, positive_class)
    x = np.r_[0.0, fps / n_neg]
    y = np.r_[0.0, tps / n_pos]
    return CurvePoints("roc", positive_class, x, y, np.r_[np.inf, thr], auc(x, y))


def pr_curve(true_labels, scores, positive_class: int) -> CurvePoints:
    """One-vs-rest precision/recall, starting at (recall 0, precision 1)."""
    tps, fps, thr, n_pos, _ = _one_vs_rest(true_labels, scores, positive_class)
    x = np.r_[0.0, tps / n_pos]
    y = np.r_[1.0, tps / (tps + fps)]
    return CurvePoints("pr", positive_class, x, y, np.r_[np.inf, thr], auc(x, y))


def auc(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


# --------------------------------------------------------------- comparison


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    classification_accuracy: float
    fault_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    seconds: float = 0.0


@dataclass(eq=False)
class ModelEvaluation:
    row: ComparisonRow
    confusion: ConfusionMatrix
    metrics: ClassMetrics
    predictions: np.ndarray
    curves: list
    notes: list


# A predictor maps the test split to (predicted codes, class scores or None).
Predictor = Callable[[object], tuple]


def evaluate_predictions(name: str, true_labels, predicted, scores=None, seconds: float = 0.0) -> ModelEvaluation:
    cm = confusion_matrix(true_labels, predicted)
    m = class_metrics(cm)
    curves, notes = [], []
    if scores is not None:
        for k in range(N_CLASSES):
            try:
                curves.append(roc_curve(true_labels, scores, k))
                curves.append(pr_curve(true_labels, scores, k))
            except CurveError as exc:
                notes.append(f"{name}: skipped curves for class {k}: {exc}")
    row = ComparisonRow(
        name, m.accuracy, fault_accuracy(true_labels, predicted), m.macro_precision, m.macro_recall, m.macro_f1, seconds
    )
    return ModelEvaluation(row, cm, m, np.asarray(predicted), curves, notes)


def compare_models(models: Sequence[tuple[str, Predictor]], test, true_labels=None, out_dir=None) -> list[ModelEvaluation]:
    """Evaluate every predictor on the same test data.

    ``test`` is handed to each predictor untouched; ``true_labels`` defaults to
    ``test.labels("test")``. Results are sorted by classification accuracy
    (descending), then by model name.
    """
    truth = test.labels("test") if true_labels is None else np.asarray(true_labels)
    evaluations = []
    for name, predictor in models:
        start = time.perf_counter()
        predicted, scores = predictor(test)
        evaluations.append(evaluate_predictions(name, truth, predicted, scores, time.perf_counter() - start))
    evaluations.sort(key=lambda e: (-e.row.classification_accuracy, e.row.model))
    if out_dir is not None:
        write_reports(evaluations, out_dir)
    return evaluations


# ------------------------------------------------------------------- output

COMPARISON_FIELDS = ("model", "classification_accuracy", "fault_accuracy", "macro_precision", "macro_recall", "macro_f1")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def comparison_csv(evaluations) -> str:
    """Comparison table; timings are left out so reruns compare byte-for-byte."""
    return _csv_text(
        COMPARISON_FIELDS, [[e.row.model] + [repr(getattr(e.row, f)) for f in COMPARISON_FIELDS[1:]] for e in evaluations]
    )


def confusion_csv(cm: ConfusionMatrix) -> str:
    names = [m.name.lower() for m in DegradationMode]
    return _csv_text(["true\\predicted"] + names, [[names[i]] + cm.counts[i].tolist() for i in range(N_CLASSES)])


def curves_csv(curves) -> str:
    rows = []
    for c in curves:
        for x, y, t in zip(c.x, c.y, c.thresholds):
            rows.append([DegradationMode(c.positive_class).name.lower(), repr(float(t)), repr(float(x)), repr(float(y))])
    return _csv_text(["class", "threshold", "x", "y"], rows)


def format_table(evaluations) -> str:
    header = f"{'model':<12}{'accuracy':>10}{'fault_acc':>11}{'macro_P':>10}{'macro_R':>10}{'macro_F1':>10}{'seconds':>10}"
    lines = [header, "-" * len(header)]
    for e in evaluations:
        r = e.row
        lines.append(
            f"{r.model:<12}{r.classification_accuracy:>10.4f}{r.fault_accuracy:>11.4f}"
            f"{r.macro_precision:>10.4f}{r.macro_recall:>10.4f}{r.macro_f1:>10.4f}{r.seconds:>10.2f}"
        )
    lines.append("(precision/recall/F1 are macro averages over the four modes)")
    return "\n".join(lines)


def write_reports(evaluations, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "comparison.csv", comparison_csv(evaluations))
    atomic_write_text(out / "comparison.txt", format_table(evaluations) + "\n")
    for e in evaluations:
        atomic_write_text(out / f"confusion_{e.row.model}.csv", confusion_csv(e.confusion))
        roc = [c for c in e.curves if c.kind == "roc"]
        pr = [c for c in e.curves if c.kind == "pr"]
        if roc:
            atomic_write_text(out / f"roc_{e.row.model}.csv", curves_csv(roc))
            atomic_write_text(out / f"pr_{e.row.model}.csv", curves_csv(pr))
        auc_rows = [[c.kind, DegradationMode(c.positive_class).name.lower(), repr(c.auc)] for c in e.curves]
        if auc_rows:
            atomic_write_text(out / f"auc_{e.row.model}.csv", _csv_text(["kind", "class", "auc"], auc_rows))
    notes = [n for e in evaluations for n in e.notes]
    if notes:
        atomic_write_text(out / "notes.txt", "\n".join(notes) + "\n")
