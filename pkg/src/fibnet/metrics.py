"""Confusion matrix and the full reported metric set: accuracy, per-class
precision/recall/F1/specificity, weighted and macro aggregates, and
one-vs-rest AUC.

Zero-denominator metrics report 0 and are flagged instead of going NaN, so
reports stay machine-readable during early multi-class training. Macro
means exclude zero-support classes and record the exclusion.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


def confusion(true_labels, predicted_labels, num_classes: int) -> np.ndarray:
    """K x K count matrix: rows are true classes, columns predictions."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"label arrays differ in length: {t.shape} vs {p.shape}")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    if t.size == 0:
        return cm
    if t.min() < 0 or t.max() >= num_classes or p.min() < 0 or p.max() >= num_classes:
        raise ValueError(f"labels out of range for {num_classes} classes")
    np.add.at(cm, (t, p), 1)
    return cm


@dataclass
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    specificity: np.ndarray
    support: np.ndarray
    zero_division_flags: list[tuple[int, str]] = field(default_factory=list)


def class_metrics(cm: np.ndarray) -> ClassMetrics:
    """One-vs-rest per-class metrics from a confusion matrix.

    precision = TP/(TP+FP), recall = TP/(TP+FN), F1 their harmonic mean,
    specificity = TN/(TN+FP). A zero denominator yields 0 plus a flag.
    """
    cm = np.asarray(cm, dtype=np.int64)
    k = cm.shape[0]
    total = cm.sum()
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    pred = cm.sum(axis=0)
    fp = pred - tp
    fn = support - tp
    tn = total - tp - fp - fn
    flags: list[tuple[int, str]] = []

    def safe_div(num, den, name):
        out = np.zeros(k, dtype=np.float64)
        for i in range(k):
            if den[i] == 0:
                flags.append((i, name))
            else:
                out[i] = num[i] / den[i]
        return out

    precision = safe_div(tp, tp + fp, "precision")
    recall = safe_div(tp, tp + fn, "recall")
    f1 = safe_div(2 * precision * recall, precision + recall, "f1")
    specificity = safe_div(tn, tn + fp, "specificity")
    return ClassMetrics(precision, recall, f1, specificity,
                        support.astype(np.int64), flags)


def aggregate(values: np.ndarray, supports: np.ndarray, mode: str) -> float:
    """weighted = support-weighted mean; macro = plain mean over classes
    with nonzero support."""
    values = np.asarray(values, dtype=np.float64)
    supports = np.asarray(supports, dtype=np.float64)
    if values.shape != supports.shape:
        raise ValueError("values and supports must have equal length")
    if mode == "weighted":
        total = supports.sum()
        return float((values * supports).sum() / total) if total > 0 else 0.0
    if mode == "macro":
        mask = supports > 0
        return float(values[mask].mean()) if mask.any() else 0.0
    raise ValueError(f"mode must be 'weighted' or 'macro', got {mode!r}")


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc_ovr(scores: np.ndarray, true_labels) -> tuple[np.ndarray, float, list[int]]:
    """Tie-aware one-vs-rest AUC per class plus the macro mean.

    AUC is the Mann-Whitney statistic of a class's score column for its
    positives against everything else; exact ties count 1/2. Classes with
    no positives or no negatives are NaN and excluded from the macro.
    """
    scores = np.asarray(scores, dtype=np.float64)
    t = np.asarray(true_labels, dtype=np.int64)
    n, k = scores.shape
    if t.shape != (n,):
        raise ValueError("labels length must match score rows")
    row_sums = scores.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        raise ValueError("score rows must sum to 1 within 1e-6")
    aucs = np.full(k, np.nan)
    excluded: list[int] = []
    for c in range(k):
        pos = t == c
        n_pos = int(pos.sum())
        n_neg = n - n_pos
        if n_pos == 0 or n_neg == 0:
            excluded.append(c)
            continue
        ranks = _average_ranks(scores[:, c])
        rank_sum = ranks[pos].sum()
        aucs[c] = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    valid = ~np.isnan(aucs)
    macro = float(aucs[valid].mean()) if valid.any() else float("nan")
    return aucs, macro, excluded


@dataclass
class EvalReport:
    """Everything reported for one evaluated split."""
    confusion: np.ndarray
    accuracy: float
    per_class: ClassMetrics
    auc: np.ndarray
    macro_auc: float
    auc_excluded: list[int]
    class_names: tuple[str, ...] | None = None

    def aggregate(self, metric: str, mode: str) -> float:
        return aggregate(getattr(self.per_class, metric),
                         self.per_class.support, mode)


def build_report(true_labels, probs: np.ndarray,
                 class_names=None) -> EvalReport:
    t = np.asarray(true_labels, dtype=np.int64)
    preds = probs.argmax(axis=1)
    k = probs.shape[1]
    cm = confusion(t, preds, k)
    acc = float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0
    aucs, macro_auc, excluded = roc_auc_ovr(probs, t)
    return EvalReport(cm, acc, class_metrics(cm), aucs, macro_auc, excluded,
                      tuple(class_names) if class_names else None)


def write_confusion_csv(cm: np.ndarray, path: str,
                        class_names=None) -> None:
    k = cm.shape[0]
    names = list(class_names) if class_names else [str(i) for i in range(k)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + names)
        for i in range(k):
            w.writerow([names[i]] + [int(v) for v in cm[i]])


def write_report_csv(report: EvalReport, path: str) -> None:
    k = report.confusion.shape[0]
    names = (list(report.class_names) if report.class_names
             else [str(i) for i in range(k)])
    pc = report.per_class
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "support", "precision", "recall", "f1",
                    "specificity", "auc"])
        for i in range(k):
            auc = "" if np.isnan(report.auc[i]) else f"{report.auc[i]:.6f}"
            w.writerow([names[i], int(pc.support[i]), f"{pc.precision[i]:.6f}",
                        f"{pc.recall[i]:.6f}", f"{pc.f1[i]:.6f}",
                        f"{pc.specificity[i]:.6f}", auc])
        w.writerow([])
        w.writerow(["aggregate", "value"])
        w.writerow(["accuracy", f"{report.accuracy:.6f}"])
        for metric in ("precision", "recall", "f1", "specificity"):
            for mode in ("weighted", "macro"):
                w.writerow([f"{mode}_{metric}",
                            f"{report.aggregate(metric, mode):.6f}"])
        if not np.isnan(report.macro_auc):
            w.writerow(["macro_auc", f"{report.macro_auc:.6f}"])
        w.writerow(["weighted_auc", f"{_weighted_auc(report):.6f}"])
        if report.per_class.zero_division_flags:
            w.writerow([])
            w.writerow(["zero_division_flags"])
            for ci, metric in report.per_class.zero_division_flags:
                w.writerow([names[ci], metric])


def _weighted_auc(report: EvalReport) -> float:
    mask = ~np.isnan(report.auc)
    sup = report.per_class.support.astype(np.float64)
    total = sup[mask].sum()
    if total == 0:
        return 0.0
    return float((report.auc[mask] * sup[mask]).sum() / total)
