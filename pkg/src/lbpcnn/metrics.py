"""Confusion counts, accuracy/sensitivity/specificity, and max-mean-min aggregation.

Glaucoma is the positive class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import GLAUCOMA

METRICS = ("accuracy", "sensitivity", "specificity")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class MetricTriple:
    accuracy: float
    sensitivity: float
    specificity: float

    def as_dict(self):
        return {m: getattr(self, m) for m in METRICS}


def confusion(true_labels, predicted_labels, positive: int = GLAUCOMA) -> ConfusionCounts:
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.shape != p.shape:
        raise ValueError(f"label sequences differ in length: {t.size} vs {p.size}")
    if t.size == 0:
        raise ValueError("confusion needs at least one label pair")
    tpos, ppos = t == positive, p == positive
    return ConfusionCounts(
        tp=int(np.sum(tpos & ppos)),
        fp=int(np.sum(~tpos & ppos)),
        tn=int(np.sum(~tpos & ~ppos)),
        fn=int(np.sum(tpos & ~ppos)),
    )


def compute_metrics(c: ConfusionCounts) -> MetricTriple:
    if c.tp + c.fn < 1 or c.tn + c.fp < 1:
        raise ValueError(f"both classes must be present in the evaluated set, got {c}")
    return MetricTriple(
        accuracy=100.0 * (c.tp + c.tn) / c.total,
        sensitivity=100.0 * c.tp / (c.tp + c.fn),
        specificity=100.0 * c.tn / (c.tn + c.fp),
    )


def aggregate_max_mean_min(values) -> tuple[float, float, float]:
    """(max, mean rounded to 2 decimals, min)."""
    v = [float(x) for x in values]
    if not v:
        raise ValueError("cannot aggregate an empty list")
    hi, lo = max(v), min(v)
    # rounding can push the mean of near-identical values just outside [lo, hi]
    mean = min(max(round(sum(v) / len(v), 2), lo), hi)
    return hi, mean, lo


def format_cell(cell) -> str:
    """Render a (max, mean, min) cell as in '97.50 - 91.25 - 85.00'."""
    return " - ".join(f"{x:.2f}" for x in cell)
