"""Evaluation metrics: accuracy, F1, attack success rate, diversity, stats.

All rates are percentages in [0, 100].  Macro F1 averages over *all* classes,
counting classes absent from the truth as 0, and the aggregate uses the
population standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": {
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
                "support": self.support,
            },
        }


@dataclass(frozen=True)
class SrReport:
    acc_unattacked: float
    acc_attacked: float
    sr: float

    def to_dict(self) -> dict:
        return {"acc_unattacked": self.acc_unattacked, "acc_attacked": self.acc_attacked, "sr": self.sr}


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    std: float
    n_repeats: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n_repeats": self.n_repeats}


def _as_labels(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    return arr


def accuracy(preds, truth) -> float:
    preds, truth = _as_labels(preds), _as_labels(truth)
    if preds.shape != truth.shape or preds.size == 0:
        raise ValueError("predictions and truth must be equal-length, non-empty")
    return 100.0 * float(np.mean(preds == truth))


def confusion_matrix(preds, truth, n_cls: int) -> np.ndarray:
    """Counts[i, j] = samples with truth i predicted as j."""
    preds, truth = _as_labels(preds), _as_labels(truth)
    if preds.shape != truth.shape:
        raise ValueError("predictions and truth must be equal-length")
    if preds.size and (preds.min() < 0 or preds.max() >= n_cls or truth.min() < 0 or truth.max() >= n_cls):
        raise ValueError(f"labels must lie in [0, {n_cls - 1}]")
    counts = np.zeros((n_cls, n_cls), dtype=np.int64)
    np.add.at(counts, (truth, preds), 1)
    return counts


def f1_scores(preds, truth, n_cls: int) -> EvalReport:
    """Per-class precision/recall/F1 plus macro and support-weighted means."""
    counts = confusion_matrix(preds, truth, n_cls)
    tp = np.diag(counts).astype(np.float64)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    total = support.sum()
    weighted = float((f1 * support).sum() / total) if total else 0.0
    return EvalReport(
        accuracy=100.0 * float(tp.sum() / total) if total else 0.0,
        macro_f1=100.0 * float(f1.mean()),
        weighted_f1=100.0 * weighted,
        precision=[100.0 * v for v in precision],
        recall=[100.0 * v for v in recall],
        f1=[100.0 * v for v in f1],
        support=[int(s) for s in support],
    )


def success_rate(acc_unattacked: float, acc_attacked: float) -> float:
    """Percent accuracy drop under attack relative to the clean accuracy.

    Negative values mean the attack improved accuracy; values above 100 are
    impossible since accuracies are non-negative.
    """
    if not acc_unattacked > 0:
        raise ValueError("unattacked accuracy must be positive to define a success rate")
    return (1.0 - acc_attacked / acc_unattacked) * 100.0


def sr_report(acc_unattacked: float, acc_attacked: float) -> SrReport:
    return SrReport(acc_unattacked, acc_attacked, success_rate(acc_unattacked, acc_attacked))


def diversity_factor(avg_images_per_class: float, n_cls: int) -> float:
    """Average images per class normalized by the class count."""
    if n_cls < 1:
        raise ValueError("class count must be >= 1")
    return avg_images_per_class / n_cls


def aggregate(values) -> AggregateStat:
    """Mean and population standard deviation over repeated runs."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("aggregate needs a non-empty sequence")
    return AggregateStat(mean=float(arr.mean()), std=float(arr.std()), n_repeats=arr.size)
