"""Multi-class classification metrics and the species-to-edibility collapse.

Confusion-matrix metrics are computed in exact rational arithmetic and rounded
to float once, so they are reproducible bit-for-bit from the counts.
"""
from __future__ import annotations

import csv
import decimal
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np


def confusion(preds, labels, n_classes: Optional[int] = None) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    if n_classes is None:
        n_classes = int(max(preds.max(initial=-1), labels.max(initial=-1))) + 1
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def _ratio(num: int, den: int) -> Optional[Fraction]:
    return Fraction(num, den) if den else None


def per_class_counts(cm) -> dict:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    tp = [int(v) for v in np.diag(cm)]
    support = [int(v) for v in cm.sum(axis=1)]
    predicted = [int(v) for v in cm.sum(axis=0)]
    fp = [p - t for p, t in zip(predicted, tp)]
    fn = [s - t for s, t in zip(support, tp)]
    tn = [total - a - b - c for a, b, c in zip(tp, fp, fn)]
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "support": support, "total": total}


def basic_metrics(cm) -> dict:
    """Accuracy plus macro and support-weighted precision, recall, F1, specificity, balanced accuracy.

    Classes with no true samples are left out of the averages and listed under
    ``zero_support``; a class that is never predicted scores precision 0 and
    is listed under ``zero_predicted``.
    """
    c = per_class_counts(cm)
    total = c["total"]
    if total == 0:
        raise ValueError("empty confusion matrix")
    n = len(c["tp"])
    per = {"precision": [], "recall": [], "f1": [], "specificity": [], "balanced_accuracy": []}
    zero_support, zero_predicted = [], []
    for i in range(n):
        tp, fp, fn, tn = c["tp"][i], c["fp"][i], c["fn"][i], c["tn"][i]
        prec = _ratio(tp, tp + fp)
        if prec is None:
            zero_predicted.append(i)
            prec = Fraction(0)
        rec = _ratio(tp, tp + fn)
        if rec is None:
            zero_support.append(i)
            rec = Fraction(0)
        f1 = _ratio(2 * tp, 2 * tp + fp + fn) or Fraction(0)
        spec = _ratio(tn, tn + fp)
        spec = Fraction(1) if spec is None else spec  # no negatives: nothing was misflagged
        per["precision"].append(prec)
        per["recall"].append(rec)
        per["f1"].append(f1)
        per["specificity"].append(spec)
        per["balanced_accuracy"].append((rec + spec) / 2)
    active = [i for i in range(n) if c["support"][i] > 0]
    out = {"accuracy": float(Fraction(sum(c["tp"]), total))}
    for name, values in per.items():
        out[f"{name}_macro"] = float(sum((values[i] for i in active), Fraction(0)) / len(active))
        out[f"{name}_weighted"] = float(sum((values[i] * c["support"][i] for i in active), Fraction(0)) / total)
        out[f"{name}_per_class"] = [float(v) for v in values]
    out["zero_support"] = zero_support
    out["zero_predicted"] = zero_predicted
    return out


def mcc(cm) -> float:
    """Matthews correlation, C x C covariance form; 0 when either marginal is degenerate."""
    cm = np.asarray(cm, dtype=np.int64)
    s = int(cm.sum())
    correct = int(np.trace(cm))
    p = [int(v) for v in cm.sum(axis=0)]
    t = [int(v) for v in cm.sum(axis=1)]
    num = correct * s - sum(a * b for a, b in zip(p, t))
    den_p = s * s - sum(a * a for a in p)
    den_t = s * s - sum(a * a for a in t)
    if den_p == 0 or den_t == 0:
        return 0.0
    # every quantity above is an exact integer; take the root in 60-digit decimal so the
    # result is the correctly rounded double
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        return float(decimal.Decimal(num) / decimal.Decimal(den_p * den_t).sqrt())


# -- threshold sweeps -------------------------------------------------------


def _sweep(scores, positive):
    """Cumulative (TP, FP) after each group of tied scores, highest score first."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positive = np.asarray(positive, dtype=bool).reshape(-1)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = positive[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last_of_group = np.r_[s[1:] != s[:-1], True]
    return tp[last_of_group], fp[last_of_group], int(y.sum()), int((~y).sum())


def roc_auc_binary(scores, positive) -> float:
    """Trapezoidal area under the ROC curve; NaN if a class is absent."""
    tp, fp, n_pos, n_neg = _sweep(scores, positive)
    if n_pos == 0 or n_neg == 0:
        return math.nan
    tpr = np.r_[0, tp] / n_pos
    fpr = np.r_[0, fp] / n_neg
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def pr_auc_binary(scores, positive) -> float:
    """Trapezoidal area under precision-recall, anchored at recall 0 with the first precision."""
    tp, fp, n_pos, _ = _sweep(scores, positive)
    if n_pos == 0:
        return math.nan
    recall = tp / n_pos
    precision = tp / (tp + fp)
    recall = np.r_[0.0, recall]
    precision = np.r_[precision[0], precision]
    return float(np.sum((recall[1:] - recall[:-1]) * (precision[1:] + precision[:-1]) / 2.0))


def roc_auc(probs, labels, c: int) -> float:
    probs = np.asarray(probs)
    return roc_auc_binary(probs[:, c], np.asarray(labels) == c)


def pr_auc(probs, labels, c: int) -> float:
    probs = np.asarray(probs)
    return pr_auc_binary(probs[:, c], np.asarray(labels) == c)


def macro_ovr(fn, probs, labels) -> float:
    """Mean one-vs-rest area over classes where it is defined."""
    probs = np.asarray(probs)
    vals = [fn(probs, labels, c) for c in range(probs.shape[1])]
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


# -- reports ----------------------------------------------------------------


@dataclass
class MetricReport:
    accuracy: float
    precision_macro: float
    precision_weighted: float
    recall_macro: float
    recall_weighted: float
    f1_macro: float
    f1_weighted: float
    specificity_macro: float
    specificity_weighted: float
    balanced_accuracy_macro: float
    balanced_accuracy_weighted: float
    mcc: float
    roc_auc_macro: float = math.nan
    pr_auc_macro: float = math.nan
    n_samples: int = 0
    zero_support_classes: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def report_from_confusion(cm, probs=None, labels=None) -> MetricReport:
    b = basic_metrics(cm)
    rep = MetricReport(
        accuracy=b["accuracy"],
        precision_macro=b["precision_macro"],
        precision_weighted=b["precision_weighted"],
        recall_macro=b["recall_macro"],
        recall_weighted=b["recall_weighted"],
        f1_macro=b["f1_macro"],
        f1_weighted=b["f1_weighted"],
        specificity_macro=b["specificity_macro"],
        specificity_weighted=b["specificity_weighted"],
        balanced_accuracy_macro=b["balanced_accuracy_macro"],
        balanced_accuracy_weighted=b["balanced_accuracy_weighted"],
        mcc=mcc(cm),
        n_samples=int(np.asarray(cm).sum()),
        zero_support_classes=len(b["zero_support"]),
    )
    if probs is not None:
        rep.roc_auc_macro = macro_ovr(roc_auc, probs, labels)
        rep.pr_auc_macro = macro_ovr(pr_auc, probs, labels)
    return rep


def evaluate(probs, labels, n_classes: Optional[int] = None) -> tuple:
    """(MetricReport, confusion matrix, predictions) from a probability matrix.

    Predictions are the argmax with ties going to the lowest class id.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    preds = probs.argmax(axis=1)
    cm = confusion(preds, labels, n_classes or probs.shape[1])
    return report_from_confusion(cm, probs, labels), cm, preds


def edibility_collapse(preds, labels, edible: Mapping[int, bool], probs=None) -> MetricReport:
    """Binary report after mapping species through ``edible``; class 1 = edible.

    ``extra`` carries ``toxic_predicted_edible`` (true class inedible, predicted
    edible) and the species accuracy for comparison.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    pe = np.array([int(bool(edible[int(p)])) for p in preds], dtype=np.int64)
    le = np.array([int(bool(edible[int(l)])) for l in labels], dtype=np.int64)
    cm = confusion(pe, le, 2)
    bprobs = None
    if probs is not None:
        probs = np.asarray(probs)
        mask = np.array([bool(edible.get(c, False)) for c in range(probs.shape[1])])
        p_edible = probs[:, mask].sum(axis=1)
        bprobs = np.stack([1.0 - p_edible, p_edible], axis=1)
    rep = report_from_confusion(cm, bprobs, le if bprobs is not None else None)
    rep.extra = {
        "toxic_predicted_edible": int(cm[0, 1]),
        "species_accuracy": float(Fraction(int(np.sum(preds == labels)), max(1, labels.size))),
    }
    return rep


def confusion_csv(cm, class_names: Optional[Sequence[str]] = None) -> str:
    cm = np.asarray(cm)
    names = list(class_names) if class_names is not None else [str(i) for i in range(cm.shape[0])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\pred"] + names)
    for name, row in zip(names, cm):
        w.writerow([name] + [int(v) for v in row])
    return buf.getvalue()


def read_confusion_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    return np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
