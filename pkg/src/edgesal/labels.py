"""Three-category relabeling of binary saliency masks (background / salient edge / object)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

BACKGROUND, EDGE, OBJECT = 0, 1, 2
# grayscale values used when label maps are written to disk
LABEL_TO_GRAY = np.array([0, 128, 255], dtype=np.uint8)

CANNY_SIGMA = 1.0
CANNY_LOW = 0.1
CANNY_HIGH = 0.3


@dataclass
class TriLabelMap:
    labels: np.ndarray  # H×W uint8 in {0, 1, 2}

    @property
    def counts(self) -> tuple[int, int, int]:
        c = np.bincount(self.labels.ravel(), minlength=3)
        return int(c[0]), int(c[1]), int(c[2])

    @property
    def total(self) -> int:
        return int(self.labels.size)

    @property
    def betas(self) -> tuple[float, float, float]:
        """Class weights: each class is weighted by the pixel share of the other two."""
        nb, ne, ns = self.counts
        n = self.total
        b, e = (ne + ns) / n, (nb + ns) / n
        # the remainder form keeps the float sum at exactly 2 (off by at most one ulp from (nb+ne)/n)
        return b, e, 2.0 - (b + e)

    @property
    def edge_fraction(self) -> float:
        return self.counts[EDGE] / self.total

    def to_gray(self) -> np.ndarray:
        return LABEL_TO_GRAY[self.labels]

    @classmethod
    def from_gray(cls, gray: np.ndarray) -> "TriLabelMap":
        gray = np.asarray(gray)
        out = np.full(gray.shape, 255, dtype=np.uint8)
        for lab, val in enumerate(LABEL_TO_GRAY):
            out[gray == val] = lab
        if (out == 255).any():
            bad = np.unique(gray[out == 255])[:5]
            raise ValueError(f"label image holds values outside {{0,128,255}}: {bad.tolist()}")
        return cls(out)

    def __eq__(self, other):
        return isinstance(other, TriLabelMap) and np.array_equal(self.labels, other.labels)


def as_binary_mask(gt) -> np.ndarray:
    gt = np.asarray(gt)
    if gt.dtype == bool:
        return gt
    if not np.isin(gt, (0, 1)).all():
        raise ValueError("ground-truth mask must be binary (values 0/1)")
    return gt.astype(bool)


def _nms(mag, gx, gy):
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    p = np.pad(mag, 1)
    h, w = mag.shape

    def shifted(dr, dc):
        return p[1 + dr : h + 1 + dr, 1 + dc : w + 1 + dc]

    n1 = np.empty_like(mag)
    n2 = np.empty_like(mag)
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1), (0, -1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1), (-1, -1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0), (-1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1), (-1, 1)),
    ]
    for sel, a, b in bins:
        n1[sel] = shifted(*a)[sel]
        n2[sel] = shifted(*b)[sel]
    # ">=" on both sides keeps both pixels straddling a symmetric step
    return np.where((mag >= n1) & (mag >= n2), mag, 0.0)


def canny_edges(gt) -> np.ndarray:
    """Canny edge map of a binary mask.

    The mask is zero-padded by one pixel first so objects touching the frame still get an
    edge along it. A constant mask has no object boundary and yields no edges, even when
    it is all ones. Gaussian blur (sigma 1), Sobel gradients, non-maximum suppression and
    hysteresis at (0.1, 0.3) of the peak gradient magnitude.
    """
    mask = as_binary_mask(gt)
    if mask.all() or not mask.any():
        return np.zeros(mask.shape, dtype=bool)
    m = np.pad(mask.astype(np.float64), 1)
    blurred = ndimage.gaussian_filter(m, CANNY_SIGMA, mode="nearest")
    gy = ndimage.sobel(blurred, axis=0, mode="nearest")
    gx = ndimage.sobel(blurred, axis=1, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-12:
        return np.zeros(mask.shape, dtype=bool)
    thin = _nms(mag, gx, gy)
    strong = thin > CANNY_HIGH * peak
    weak = thin > CANNY_LOW * peak
    comp, n = ndimage.label(weak, structure=np.ones((3, 3)))
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(comp[strong])] = True
    keep[0] = False
    return keep[comp][1:-1, 1:-1]


def dilate_3x3(edges) -> np.ndarray:
    return ndimage.binary_dilation(np.asarray(edges, dtype=bool), structure=np.ones((3, 3), dtype=bool))


def three_category_labels(gt) -> TriLabelMap:
    """Relabel a binary mask: all background, then thickened edges, then remaining object pixels."""
    mask = as_binary_mask(gt)
    labels = np.full(mask.shape, BACKGROUND, dtype=np.uint8)
    edge = dilate_3x3(canny_edges(mask))
    labels[edge] = EDGE
    labels[mask & ~edge] = OBJECT
    return TriLabelMap(labels)
