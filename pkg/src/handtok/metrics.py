"""PCK, AUC over a PCK curve, and per-instance / per-class top-k accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PckCurve:
    thresholds: np.ndarray
    values: np.ndarray


def _distances(pred, gt, valid):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    dist = np.sqrt(((pred - gt) ** 2).sum(-1))
    mask = np.ones(dist.shape, bool) if valid is None else np.broadcast_to(np.asarray(valid, bool), dist.shape)
    if not mask.any():
        raise MetricError("PCK is undefined with no valid joints")
    return dist[mask]


def pck(pred, gt, tau: float, valid=None) -> float:
    """Fraction of valid joints whose Euclidean error is at most ``tau`` pixels.

    ``pred``/``gt``: ``(..., 2)``; ``valid`` broadcasts against the leading shape.
    """
    if tau <= 0:
        raise MetricError(f"threshold must be positive, got {tau}")
    d = _distances(pred, gt, valid)
    return float(np.count_nonzero(d <= tau) / d.size)


def pck_curve(pred, gt, thresholds, valid=None) -> PckCurve:
    d = _distances(pred, gt, valid)
    th = np.asarray(thresholds, dtype=np.float64)
    if (th <= 0).any() or (np.diff(th) <= 0).any():
        raise MetricError("thresholds must be positive and strictly ascending")
    ds = np.sort(d)
    counts = np.searchsorted(ds, th, side="right")
    return PckCurve(th, counts / d.size)


def auc(pred, gt, tau_min: float = 20.0, tau_max: float = 40.0, valid=None) -> float:
    """Trapezoid-rule area under PCK at every integer threshold, normalized to [0, 1]."""
    if not tau_min < tau_max:
        raise MetricError(f"need tau_min < tau_max, got {tau_min}, {tau_max}")
    th = np.arange(np.ceil(tau_min), np.floor(tau_max) + 1)
    if th[0] <= 0:
        raise MetricError("thresholds must be positive")
    curve = pck_curve(pred, gt, th, valid)
    v = curve.values
    area = float(((v[1:] + v[:-1]) * 0.5 * np.diff(th)).sum())
    return area / (th[-1] - th[0])


def topk_hits(scores, labels, k: int) -> np.ndarray:
    """Boolean per sample: is the label among the k best scores (ties go to the lower index)?"""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise MetricError(f"scores {scores.shape} do not match {labels.shape[0]} labels")
    n, K = scores.shape
    if not 1 <= k <= K:
        raise MetricError(f"k={k} must be in [1, {K}]")
    if n and (labels.min() < 0 or labels.max() >= K):
        raise MetricError(f"labels must lie in [0, {K})")
    true = scores[np.arange(n), labels][:, None]
    idx = np.arange(K)[None, :]
    # classes ranked strictly ahead of the label: higher score, or equal score and lower index
    ahead = (scores > true) | ((scores == true) & (idx < labels[:, None]))
    return ahead.sum(1) < k


def topk_accuracy(scores, labels, k: int = 1, mode: str = "per_instance") -> float:
    hits = topk_hits(scores, labels, k)
    if hits.size == 0:
        raise MetricError("accuracy is undefined for an empty set")
    if mode == "per_instance":
        return float(hits.mean())
    if mode == "per_class":
        labels = np.asarray(labels, dtype=np.int64)
        classes = np.unique(labels)
        return float(np.mean([hits[labels == c].mean() for c in classes]))
    raise MetricError(f"unknown mode '{mode}' (use per_instance or per_class)")


def classification_report(scores, labels) -> dict:
    """Metrics-report dictionary with top-1/top-5 in both averaging modes."""
    scores = np.asarray(scores)
    labels = np.asarray(labels, dtype=np.int64)
    k5 = min(5, scores.shape[1])
    counts = np.bincount(labels, minlength=scores.shape[1])
    return {
        "top1_pi": topk_accuracy(scores, labels, 1, "per_instance"),
        "top5_pi": topk_accuracy(scores, labels, k5, "per_instance"),
        "top1_pc": topk_accuracy(scores, labels, 1, "per_class"),
        "top5_pc": topk_accuracy(scores, labels, k5, "per_class"),
        "per_class_counts": [int(c) for c in counts],
    }
