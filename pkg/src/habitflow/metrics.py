"""Binary classification metrics computed from scratch.

Labels use 1 for the positive class (behavior omitted). A score at or above
the threshold predicts positive. Any ratio whose denominator is zero is
reported as 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

METRIC_NAMES = ("mcc", "accuracy", "tpr", "fpr", "precision", "f1", "npv")


def _validate(probs, labels, require_both=True) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if probs.shape != labels.shape:
        raise ValueError(f"{probs.size} scores but {labels.size} labels")
    if not np.all(np.isfinite(probs)):
        raise ValueError("scores must be finite")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    labels = labels.astype(np.int64)
    if require_both and (labels.min(initial=1) != 0 or labels.max(initial=0) != 1):
        raise ValueError("both classes must be present")
    return probs, labels


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def mcc_from_counts(tp, fp, tn, fn):
    tp, fp, tn, fn = (np.asarray(v, dtype=np.float64) for v in (tp, fp, tn, fn))
    den = np.sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    return _ratio(tp * tn - fp * fn, den)


def roc_curve(probs, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC points over every distinct score, from (0, 0) to (1, 1).

    Returns ``(fpr, tpr, thresholds)``; the first threshold is ``+inf``.
    """
    probs, labels = _validate(probs, labels)
    order = np.argsort(-probs, kind="mergesort")
    scores = probs[order]
    hits = labels[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(scores)), scores.size - 1]
    tps = np.cumsum(hits)[last_of_run]
    fps = (last_of_run + 1) - tps
    tpr = np.r_[0.0, tps / tps[-1]]
    fpr = np.r_[0.0, fps / fps[-1]]
    return fpr, tpr, np.r_[np.inf, scores[last_of_run]]


def compute_auc(probs, labels) -> float:
    """Trapezoidal area under the ROC curve; tied scores count half."""
    fpr, tpr, _ = roc_curve(probs, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


@dataclass(frozen=True)
class ThresholdMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    mcc: float
    accuracy: float
    tpr: float
    fpr: float
    precision: float
    f1: float
    npv: float

    def as_dict(self) -> dict:
        return asdict(self)


def confusion_metrics(predicted, labels) -> ThresholdMetrics:
    """Metric set for hard 0/1 predictions."""
    predicted = np.asarray(predicted).astype(bool).ravel()
    _, labels = _validate(np.zeros(predicted.size), labels, require_both=False)
    actual = labels.astype(bool)
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    tn = int(np.sum(~predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    precision = float(_ratio(tp, tp + fp))
    tpr = float(_ratio(tp, tp + fn))
    return ThresholdMetrics(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        mcc=float(mcc_from_counts(tp, fp, tn, fn)),
        accuracy=float(_ratio(tp + tn, tp + fp + tn + fn)),
        tpr=tpr,
        fpr=float(_ratio(fp, fp + tn)),
        precision=precision,
        f1=float(_ratio(2 * tp, 2 * tp + fp + fn)),
        npv=float(_ratio(tn, tn + fn)),
    )


def compute_threshold_metrics(probs, labels, threshold: float) -> ThresholdMetrics:
    probs, labels = _validate(probs, labels)
    return confusion_metrics(probs >= threshold, labels)
