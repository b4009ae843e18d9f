"""MAE, 256-level PR curves and F-measure for saliency maps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BETA2 = 0.3
N_THRESHOLDS = 256


def _check_pair(s, gt):
    s = np.asarray(s, dtype=np.float64)
    gt = np.asarray(gt)
    if s.ndim == 3 and s.shape[0] == 1:
        s = s[0]
    if gt.ndim == 3 and gt.shape[0] == 1:
        gt = gt[0]
    if s.shape != gt.shape:
        raise ValueError(f"saliency map {s.shape} and ground truth {gt.shape} differ in resolution")
    return s, gt


def mae(s, gt) -> float:
    s, gt = _check_pair(s, gt)
    # fsum is order-independent, so the result does not depend on memory layout
    return math.fsum(np.abs(s - gt.astype(np.float64)).ravel()) / s.size


def quantize(s) -> np.ndarray:
    """Map [0, 1] scores to integer levels 0..255."""
    return np.clip(np.rint(np.asarray(s, dtype=np.float64) * 255.0), 0, 255).astype(np.int64)


def pr_curve(s, gt) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at thresholds t = 0..255, predicting salient where ``level > t``.

    Empty predictions count as precision 1; an empty ground truth gives recall 1.
    """
    s, gt = _check_pair(s, gt)
    gt = gt.astype(bool)
    q = quantize(s)
    hist_pos = np.bincount(q[gt], minlength=N_THRESHOLDS)
    hist_all = np.bincount(q.ravel(), minlength=N_THRESHOLDS)
    # predicted-positive counts for "level > t" are suffix sums starting at t+1
    tp = np.concatenate([np.cumsum(hist_pos[::-1])[::-1][1:], [0]])
    pp = np.concatenate([np.cumsum(hist_all[::-1])[::-1][1:], [0]])
    n_pos = int(gt.sum())
    precision = np.where(pp > 0, tp / np.maximum(pp, 1), 1.0)
    recall = tp / n_pos if n_pos else np.ones(N_THRESHOLDS)
    return precision, recall


def f_measure(precision, recall, beta2: float = BETA2):
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    den = beta2 * p + r
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(den > 0, (1 + beta2) * p * r / np.where(den > 0, den, 1.0), 0.0)
    return float(f) if f.ndim == 0 else f


@dataclass
class ImageReport:
    name: str
    mae: float
    precision: np.ndarray
    recall: np.ndarray
    f: np.ndarray
    degenerate: bool = False  # ground truth without salient pixels

    @property
    def max_f(self) -> float:
        return float(self.f.max())

    @property
    def mean_f(self) -> float:
        return float(self.f.mean())


def evaluate_image(s, gt, name: str = "") -> ImageReport:
    p, r = pr_curve(s, gt)
    return ImageReport(
        name=name,
        mae=mae(s, gt),
        precision=p,
        recall=r,
        f=f_measure(p, r),
        degenerate=not np.asarray(gt).astype(bool).any(),
    )


@dataclass
class MetricsReport:
    images: list[ImageReport]
    precision: np.ndarray  # curve averaged over images
    recall: np.ndarray
    f: np.ndarray          # averaged per-threshold F
    mean_mae: float
    max_f: float           # max over thresholds of the averaged F curve (primary)
    mean_f: float          # mean over thresholds of the averaged F curve (primary)
    max_f_per_image: float  # mean over images of each image's best F
    mean_f_per_image: float
    n_skipped: int = 0
    skipped: list[str] = field(default_factory=list)

    @property
    def n_evaluated(self) -> int:
        return len(self.images)


def aggregate(reports, skipped=()) -> MetricsReport:
    reports = list(reports)
    if not reports:
        raise ValueError("cannot aggregate an empty set of image reports")
    # fixed-order reduction keeps results independent of evaluation scheduling
    f = np.mean([r.f for r in reports], axis=0)
    return MetricsReport(
        images=reports,
        precision=np.mean([r.precision for r in reports], axis=0),
        recall=np.mean([r.recall for r in reports], axis=0),
        f=f,
        mean_mae=float(np.mean([r.mae for r in reports])),
        max_f=float(f.max()),
        mean_f=float(f.mean()),
        max_f_per_image=float(np.mean([r.max_f for r in reports])),
        mean_f_per_image=float(np.mean([r.mean_f for r in reports])),
        n_skipped=len(skipped),
        skipped=list(skipped),
    )


def evaluate(pairs) -> MetricsReport:
    """Evaluate an iterable of ``(name, saliency, gt)`` triples."""
    return aggregate(evaluate_image(s, gt, name) for name, s, gt in pairs)
