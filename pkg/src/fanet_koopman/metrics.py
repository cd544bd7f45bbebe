"""Prediction error, isolation-event confusion counts, F1 and false-alarm rate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import linear_to_db


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


def classify_events(actual, predicted) -> ConfusionCounts:
    """Tally (actual, predicted) isolation pairs into TP/FP/TN/FN."""
    a = np.asarray(actual, dtype=bool)
    p = np.asarray(predicted, dtype=bool)
    if a.shape != p.shape:
        raise ValueError(f"actual {a.shape} and predicted {p.shape} differ in shape")
    return ConfusionCounts(tp=int(np.sum(a & p)), fp=int(np.sum(~a & p)),
                           tn=int(np.sum(~a & ~p)), fn=int(np.sum(a & ~p)))


def f1_score(counts: ConfusionCounts) -> float:
    """2TP / (2TP + FP + FN); 0 when nothing was actual or predicted."""
    denom = 2 * counts.tp + counts.fp + counts.fn
    return 2 * counts.tp / denom if denom else 0.0


def false_alarm_rate(counts: ConfusionCounts) -> float:
    """FP / (FP + TN); 0 when there were no actual non-events."""
    denom = counts.fp + counts.tn
    return counts.fp / denom if denom else 0.0


def prediction_error(truth, predicted, steps: int | None = None,
                     domain: str = "db") -> float:
    """Mean over the first ``steps`` steps of the summed squared row errors.

    Both inputs are linear-ratio arrays of shape (P, L, L-1) (a single
    (P, D) row sequence also works). With ``domain="db"`` they are compared
    in decibels.
    """
    t = np.asarray(truth, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if t.shape != p.shape:
        raise ValueError(f"truth {t.shape} and prediction {p.shape} differ in shape")
    steps = t.shape[0] if steps is None else steps
    if steps < 1 or steps > t.shape[0]:
        raise ValueError(f"steps must lie in [1, {t.shape[0]}], got {steps}")
    return float(np.sum(step_errors(t[:steps], p[:steps], domain)) / steps)


def step_errors(truth, predicted, domain: str = "db") -> np.ndarray:
    """Summed squared error at each leading index (prediction step)."""
    t = np.asarray(truth, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if domain == "db":
        t, p = linear_to_db(t), linear_to_db(p)
    elif domain != "linear":
        raise ValueError(f"error domain must be 'db' or 'linear', got {domain!r}")
    diff = t - p
    return np.sum(diff.reshape(diff.shape[0], -1) ** 2, axis=1)


@dataclass
class EvalReport:
    epsilon: float
    counts: ConfusionCounts
    horizon: int
    mode: str
    kappa: float
    per_uav: list[ConfusionCounts] = field(default_factory=list)

    @property
    def f1(self) -> float:
        return f1_score(self.counts)

    @property
    def far(self) -> float:
        return false_alarm_rate(self.counts)

    @property
    def f1_degenerate(self) -> bool:
        return 2 * self.counts.tp + self.counts.fp + self.counts.fn == 0

    @property
    def far_degenerate(self) -> bool:
        return self.counts.fp + self.counts.tn == 0
