"""Binary-classification metrics at playa-month, playa and regional scale.

A prediction counts as positive when ``prob >= cutoff``. Rates that would
divide by zero are returned as ``None`` rather than 0.
"""

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from .model import SequenceSample, split_code
from .numeric import bce_with_logits

_PROB_CLIP = 1e-15


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    split: str
    cutoff: float
    accuracy: float
    bce_loss: float
    auc: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    counts: ConfusionCounts

    def to_dict(self) -> dict:
        return asdict(self)


def _as_pair(probs, labels):
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if probs.shape != labels.shape:
        raise ValueError(f"probs and labels differ in length ({probs.size} vs {labels.size})")
    if probs.size == 0:
        raise ValueError("no predictions to score")
    return probs, labels.astype(bool)


def confusion_at_cutoff(probs, labels, cutoff: float) -> ConfusionCounts:
    probs, labels = _as_pair(probs, labels)
    pred = probs >= cutoff
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & labels)),
        fp=int(np.count_nonzero(pred & ~labels)),
        tn=int(np.count_nonzero(~pred & ~labels)),
        fn=int(np.count_nonzero(~pred & labels)),
    )


def _ratio(num, den):
    return None if den == 0 else num / den


def precision_recall_f1(counts: ConfusionCounts):
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    f1 = None if p is None or r is None else _ratio(2 * p * r, p + r)
    return p, r, f1


def accuracy(counts: ConfusionCounts) -> float:
    return (counts.tp + counts.tn) / counts.total


def roc_curve(probs, labels):
    """ROC points ``(fpr, tpr, thresholds)``, thresholds descending.

    Tied scores form one step. The first point is (0, 0) at threshold +inf;
    the last is (1, 1).
    """
    probs, labels = _as_pair(probs, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    order = np.argsort(-probs, kind="mergesort")
    s = probs[order]
    y = labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(y)[last_of_group]
    fps = (last_of_group + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thresholds = np.r_[np.inf, s[last_of_group]]
    return fpr, tpr, thresholds


def auc(fpr, tpr) -> float:
    """Trapezoidal area under a curve given in increasing-x order."""
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_auc(probs, labels) -> float:
    fpr, tpr, _ = roc_curve(probs, labels)
    return auc(fpr, tpr)


def cutoff_grid(step: float = 0.01) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.arange(1, n) / n


def select_cutoff(val_probs, val_labels, grid_step: float = 0.01) -> float:
    """Cutoff on the grid step..1-step maximizing F1; ties go to the smallest."""
    probs, labels = _as_pair(val_probs, val_labels)
    if labels.all() or not labels.any():
        raise ValueError("cutoff selection needs both classes in the validation labels")
    best, best_f1 = None, -1.0
    for c in cutoff_grid(grid_step):
        f1 = precision_recall_f1(confusion_at_cutoff(probs, labels, c))[2]
        if f1 is not None and f1 > best_f1:
            best, best_f1 = float(c), f1
    if best is None:
        best = float(cutoff_grid(grid_step)[0])
    return best


def bce_from_probs(probs, labels) -> float:
    """Mean BCE of probabilities (clipped away from 0 and 1)."""
    probs, labels = _as_pair(probs, labels)
    p = np.clip(probs, _PROB_CLIP, 1.0 - _PROB_CLIP)
    return float(-np.mean(np.where(labels, np.log(p), np.log1p(-p))))


def evaluate_split(probs, labels, cutoff: float, split: str, logits=None) -> MetricsReport:
    """Pooled playa-month metrics for one split.

    Pass ``logits`` to compute the loss on logits instead of clipped probabilities.
    """
    probs, labels_b = _as_pair(probs, labels)
    counts = confusion_at_cutoff(probs, labels_b, cutoff)
    p, r, f1 = precision_recall_f1(counts)
    if logits is not None:
        loss = float(np.mean(bce_with_logits(np.asarray(logits).reshape(-1), labels_b.astype(float))))
    else:
        loss = bce_from_probs(probs, labels_b)
    try:
        area = roc_auc(probs, labels_b)
    except ValueError:
        area = None
    return MetricsReport(split, float(cutoff), accuracy(counts), loss, area, p, r, f1, counts)


@dataclass
class PlayaMetrics:
    playa_id: str
    bce_loss: float
    f1: Optional[float]


def per_entity_metrics(samples: Sequence[SequenceSample], probs: np.ndarray, cutoff: float, split) -> List[PlayaMetrics]:
    """Loss and F1 for each playa over its months in ``split`` (same order as samples)."""
    code = split_code(split)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[0] != len(samples):
        raise ValueError("one probability row per sample is required")
    rows = []
    for s, p in zip(samples, probs):
        mask = s.split == code
        if not mask.any():
            continue
        counts = confusion_at_cutoff(p[mask], s.labels[mask], cutoff)
        rows.append(PlayaMetrics(s.playa_id, bce_from_probs(p[mask], s.labels[mask]), precision_recall_f1(counts)[2]))
    return rows


def regional_fraction(values, cutoff: float) -> np.ndarray:
    """Share of playas at or above ``cutoff`` in each month.

    ``values`` is (n_playas, n_months) probabilities or 0/1 labels; ragged
    input (a list of unequal rows) is rejected.
    """
    if not isinstance(values, np.ndarray):
        lengths = {len(v) for v in values}
        if len(lengths) != 1:
            raise ValueError("every playa must cover every month of the window")
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("expected a (n_playas, n_months) array")
    return (arr >= cutoff).mean(axis=0)
