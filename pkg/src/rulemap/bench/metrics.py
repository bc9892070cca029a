"""Binary classification metrics with explicit zero-denominator handling,
plus a seeded percentile bootstrap over case-level resamples.

Convention throughout: a metric whose denominator is zero is reported as 0
and its name is added to ``undefined_flags`` instead of silently dropping
the row or propagating NaN.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping

import numpy as np

from ..errors import JoinError

log = logging.getLogger(__name__)

METRIC_IDS = ("precision", "recall", "accuracy", "f1", "f2",
              "balanced_accuracy", "kappa")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class CiBound:
    lo: float
    hi: float
    level: float
    resamples: int
    seed: int
    degenerate_resamples: int = 0

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "level": self.level,
                "resamples": self.resamples, "seed": self.seed,
                "degenerate_resamples": self.degenerate_resamples}


@dataclass
class MetricsReport:
    counts: ConfusionCounts
    precision: float
    recall: float
    accuracy: float
    f1: float
    f2: float
    balanced_accuracy: float
    kappa: float
    undefined_flags: tuple[str, ...] = ()
    ci: dict[str, CiBound] = field(default_factory=dict)

    def value(self, metric: str) -> float:
        return getattr(self, metric)

    def to_dict(self) -> dict:
        return {
            "counts": self.counts.to_dict(),
            "metrics": {name: self.value(name) for name in METRIC_IDS},
            "undefined_flags": list(self.undefined_flags),
            "ci": {name: bound.to_dict() for name, bound in self.ci.items()},
        }


def round_half_up(value: float, digits: int = 2) -> float:
    """Display rounding for the report tables (0.615 -> 0.62)."""
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def confusion(predictions: Mapping[str, bool],
              gold: Mapping[str, bool]) -> ConfusionCounts:
    """Standard 2x2 cross-tabulation over the predicted ids."""
    missing = set(predictions) - set(gold)
    if missing:
        raise JoinError(missing)
    if not predictions:
        log.warning("empty prediction set: all confusion counts are zero")
    tp = fp = tn = fn = 0
    for case_id, label in predictions.items():
        truth = gold[case_id]
        if label and truth:
            tp += 1
        elif label and not truth:
            fp += 1
        elif not label and truth:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def metrics(counts: ConfusionCounts) -> MetricsReport:
    flags: list[str] = []

    def ratio(num: float, den: float, name: str) -> float:
        if den == 0:
            flags.append(name)
            return 0.0
        return num / den

    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    n = counts.n
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    accuracy = ratio(tp + tn, n, "accuracy")
    f1 = ratio((1 + 1) * precision * recall, precision + recall, "f1")
    f2 = ratio((1 + 4) * precision * recall, 4 * precision + recall, "f2")
    specificity = ratio(tn, tn + fp, "balanced_accuracy")
    if "balanced_accuracy" not in flags and (tp + fn) == 0:
        flags.append("balanced_accuracy")
    balanced_accuracy = 0.0 if "balanced_accuracy" in flags \
        else (recall + specificity) / 2
    if n == 0:
        flags.append("kappa")
        kappa = 0.0
    else:
        p_o = (tp + tn) / n
        p_e = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n)
        if p_e == 1.0:
            flags.append("kappa")
            kappa = 0.0
        else:
            kappa = (p_o - p_e) / (1 - p_e)
    return MetricsReport(
        counts=counts,
        precision=precision,
        recall=recall,
        accuracy=accuracy,
        f1=f1,
        f2=f2,
        balanced_accuracy=balanced_accuracy,
        kappa=kappa,
        undefined_flags=tuple(dict.fromkeys(flags)),
    )


# --------------------------------------------------------------------------
# Bootstrap


def _metric_arrays(metric: str, tp, fp, tn, fn):
    """Vectorized metric over per-resample counts. Returns (values,
    degenerate mask); degenerate resamples contribute 0."""
    n = tp + fp + tn + fn

    def safe(num, den):
        bad = den == 0
        values = np.divide(num, den, out=np.zeros_like(num, dtype=np.float64),
                           where=~bad)
        return values, bad

    if metric == "precision":
        return safe(tp, tp + fp)
    if metric == "recall":
        return safe(tp, tp + fn)
    if metric == "accuracy":
        return safe(tp + tn, n)
    if metric in ("f1", "f2"):
        beta2 = 1.0 if metric == "f1" else 4.0
        precision, bad_p = safe(tp, tp + fp)
        recall, bad_r = safe(tp, tp + fn)
        values, bad_f = safe((1 + beta2) * precision * recall,
                             beta2 * precision + recall)
        return values, bad_p | bad_r | bad_f
    if metric == "balanced_accuracy":
        recall, bad_r = safe(tp, tp + fn)
        specificity, bad_s = safe(tn, tn + fp)
        bad = bad_r | bad_s
        values = np.where(bad, 0.0, (recall + specificity) / 2)
        return values, bad
    if metric == "kappa":
        nf = n.astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            p_o = np.where(n > 0, (tp + tn) / nf, 0.0)
            p_e = np.where(n > 0,
                           ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn))
                           / (nf * nf), 1.0)
        bad = (n == 0) | (p_e == 1.0)
        values = np.where(bad, 0.0, (p_o - p_e) / np.where(bad, 1.0, 1.0 - p_e))
        return values, bad
    raise ValueError(f"unknown metric {metric!r}")


def bootstrap_ci(predictions: Mapping[str, bool], gold: Mapping[str, bool],
                 metric: str, resamples: int = 10_000, seed: int = 640,
                 level: float = 0.95) -> CiBound:
    """Percentile bootstrap: resample cases with replacement, recompute the
    metric per resample, take the (1-level)/2 and 1-(1-level)/2 quantiles.
    Deterministic for a given seed."""
    if metric not in METRIC_IDS:
        raise ValueError(f"unknown metric {metric!r}")
    if not predictions:
        raise ValueError("bootstrap needs a non-empty prediction set")
    ids = sorted(predictions)
    pred = np.array([predictions[i] for i in ids], dtype=np.int64)
    truth = np.array([gold[i] for i in ids], dtype=np.int64)
    n = len(ids)

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    p = pred[idx]
    g = truth[idx]
    tp = (p & g).sum(axis=1)
    fp = (p & (1 - g)).sum(axis=1)
    fn = ((1 - p) & g).sum(axis=1)
    tn = ((1 - p) & (1 - g)).sum(axis=1)

    values, degenerate = _metric_arrays(metric, tp, fp, tn, fn)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [alpha, 1.0 - alpha])
    return CiBound(lo=float(lo), hi=float(hi), level=level,
                   resamples=resamples, seed=seed,
                   degenerate_resamples=int(degenerate.sum()))
