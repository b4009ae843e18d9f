"""Synthetic salient-object scenes: colored shapes over textured backgrounds."""
from __future__ import annotations

import numpy as np

from .color import rgb_to_lab
from .tensor import bilinear_upsample

SMALL_AREA = 1.0 / 25.0
SMALL_PROB = 0.25
MIN_LAB_GAP = 35.0
MARGIN = 3


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    base = rng.uniform(0.2, 0.8, size=3)
    # muted palette: pull the base color toward its own gray level
    base = 0.5 * base + 0.5 * base.mean()
    coarse = rng.normal(0.0, 0.06, size=(3, 5, 5))
    smooth = bilinear_upsample(coarse, size, size)
    grain = rng.normal(0.0, 0.02, size=(3, size, size))
    return np.clip(base[:, None, None] + smooth + grain, 0.0, 1.0)


def _object_color(rng: np.random.Generator, bg: np.ndarray) -> np.ndarray:
    bg_lab = rgb_to_lab(bg.mean(axis=(1, 2))[:, None, None])[:, 0, 0]
    for _ in range(100):
        col = rng.uniform(0.0, 1.0, size=3)
        lab = rgb_to_lab(col[:, None, None])[:, 0, 0]
        if np.linalg.norm(lab - bg_lab) >= MIN_LAB_GAP:
            return col
    return 1.0 - bg.mean(axis=(1, 2))


def _shape_mask(rng: np.random.Generator, size: int, extent: tuple[int, int], ellipse: bool) -> np.ndarray:
    hh, ww = extent
    y0 = int(rng.integers(MARGIN, size - MARGIN - hh + 1))
    x0 = int(rng.integers(MARGIN, size - MARGIN - ww + 1))
    mask = np.zeros((size, size), dtype=bool)
    if not ellipse:
        mask[y0 : y0 + hh, x0 : x0 + ww] = True
        return mask
    ys, xs = np.mgrid[0:size, 0:size] + 0.5
    cy, cx = y0 + hh / 2.0, x0 + ww / 2.0
    return ((ys - cy) / (hh / 2.0)) ** 2 + ((xs - cx) / (ww / 2.0)) ** 2 <= 1.0


def synth_sample(rng: np.random.Generator, size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(image 3×size×size in [0, 1], mask size×size bool)``.

    A quarter of the scenes hold a single object covering less than 1/25 of the frame.
    """
    img = _background(rng, size)
    mask = np.zeros((size, size), dtype=bool)
    small = rng.random() < SMALL_PROB
    n_obj = 1 if small else int(rng.integers(1, 4))
    max_side = size - 2 * MARGIN
    for _ in range(n_obj):
        if small:
            side_cap = max(3, int(np.sqrt(SMALL_AREA) * size) - 1)
            extent = tuple(int(v) for v in rng.integers(min(4, side_cap), side_cap + 1, size=2))
        else:
            lo = max(6, size // 6)
            hi = max(lo + 1, min(max_side, size // 2 + size // 8))
            extent = tuple(int(v) for v in rng.integers(lo, hi + 1, size=2))
        ellipse = bool(rng.random() < 0.5)
        shape = _shape_mask(rng, size, extent, ellipse)
        if not shape.any():
            continue
        col = _object_color(rng, img)
        shade = col[:, None, None] + rng.normal(0.0, 0.02, size=(3, size, size))
        img = np.where(shape[None], np.clip(shade, 0.0, 1.0), img)
        mask |= shape
    if small and mask.mean() >= SMALL_AREA:
        raise AssertionError("small-object scene exceeded the size cap")
    return img, mask


def centered_object_sample(rng: np.random.Generator, size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """One object centred in the frame, never touching the border."""
    img = _background(rng, size)
    side = int(rng.integers(size // 4, size // 2 + 1))
    ellipse = bool(rng.random() < 0.5)
    off = (size - side) // 2
    ys, xs = np.mgrid[0:size, 0:size] + 0.5
    if ellipse:
        c = size / 2.0
        mask = ((ys - c) / (side / 2.0)) ** 2 + ((xs - c) / (side / 2.0)) ** 2 <= 1.0
    else:
        mask = np.zeros((size, size), dtype=bool)
        mask[off : off + side, off : off + side] = True
    col = _object_color(rng, img)
    shade = col[:, None, None] + rng.normal(0.0, 0.02, size=(3, size, size))
    img = np.where(mask[None], np.clip(shade, 0.0, 1.0), img)
    return img, mask


def synth_dataset(n: int, size: int = 64, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [synth_sample(rng, size) for _ in range(n)]
