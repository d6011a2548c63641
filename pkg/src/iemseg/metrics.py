"""Foreground segmentation metrics and batch aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import as_mask


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    iou: float
    dice: float
    flipped: bool = False


@dataclass
class BatchMetrics:
    mean: Metrics
    per_image: list[Metrics] = field(default_factory=list)

    @property
    def flipped_fraction(self) -> float:
        return float(np.mean([m.flipped for m in self.per_image]))


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred = as_mask(pred).astype(bool)
    gt = as_mask(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs ground truth {gt.shape}")
    return pred, gt


def accuracy(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return float(np.mean(pred == gt))


def iou(pred, gt) -> float:
    """Foreground intersection over union; 1.0 when both masks are empty."""
    pred, gt = _pair(pred, gt)
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def dice(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    total = np.count_nonzero(pred) + np.count_nonzero(gt)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(pred & gt) / total


def score(pred, gt, flip_search: bool = False) -> Metrics:
    """All three metrics for one pair.

    With ``flip_search`` the complement of ``pred`` is scored too and kept
    when its IoU is strictly higher.
    """
    direct = Metrics(accuracy(pred, gt), iou(pred, gt), dice(pred, gt))
    if not flip_search:
        return direct
    inv = 1 - as_mask(pred)
    flipped = Metrics(accuracy(inv, gt), iou(inv, gt), dice(inv, gt), flipped=True)
    return flipped if flipped.iou > direct.iou else direct


def evaluate_batch(pairs, flip_search: bool = False) -> BatchMetrics:
    """Per-image metrics and their unweighted mean, in input order."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no (prediction, ground truth) pairs to evaluate")
    per_image = [score(p, g, flip_search) for p, g in pairs]
    mean = Metrics(
        accuracy=float(np.mean([m.accuracy for m in per_image])),
        iou=float(np.mean([m.iou for m in per_image])),
        dice=float(np.mean([m.dice for m in per_image])),
    )
    return BatchMetrics(mean=mean, per_image=per_image)
