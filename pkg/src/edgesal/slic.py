"""SLIC over-segmentation and the region adjacency graph built from it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .color import rgb_to_lab

MIN_SIDE = 16


@dataclass
class SuperpixelGraph:
    labels: np.ndarray          # H×W region ids, dense 0..N-1
    mean_lab: np.ndarray        # N×3
    centroid: np.ndarray        # N×2 as (x, y), normalized to [0, 1]
    count: np.ndarray           # N pixel counts
    boundary_count: np.ndarray  # N counts of pixels lying on the image border
    edges: np.ndarray           # E×2 adjacent pairs with i < j

    @property
    def n_regions(self) -> int:
        return len(self.count)

    @property
    def on_boundary(self) -> np.ndarray:
        return self.boundary_count > 0

    @property
    def edge_weights(self) -> np.ndarray:
        """Appearance distance d_app along each adjacency edge."""
        if len(self.edges) == 0:
            return np.zeros(0)
        diff = self.mean_lab[self.edges[:, 0]] - self.mean_lab[self.edges[:, 1]]
        return np.sqrt((diff**2).sum(axis=1))

    def appearance_distance(self) -> np.ndarray:
        """All-pairs Euclidean distance of mean Lab colors (N×N)."""
        diff = self.mean_lab[:, None, :] - self.mean_lab[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))

    def broadcast(self, values) -> np.ndarray:
        """Paint per-region values back onto the pixel grid."""
        return np.asarray(values, dtype=np.float64)[self.labels]


def _neighbour_pairs(labels):
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return a, b


def _components(labels):
    """Split every label into its 4-connected components."""
    h, w = labels.shape
    flat = labels.ravel()
    a, b = _neighbour_pairs(labels)
    same = flat[a] == flat[b]
    g = coo_matrix((np.ones(same.sum()), (a[same], b[same])), shape=(h * w, h * w))
    _, comp = connected_components(g, directed=False)
    return _relabel_raster(comp.reshape(h, w))


def _relabel_raster(labels):
    """Renumber ids densely in order of first appearance in raster scan."""
    _, first, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    return order[inverse].reshape(labels.shape)


def _region_means(labels, lab, n):
    cnt = np.bincount(labels.ravel(), minlength=n).astype(np.float64)
    means = np.stack(
        [np.bincount(labels.ravel(), weights=ch.ravel(), minlength=n) for ch in lab], axis=1
    )
    return means / np.maximum(cnt, 1)[:, None], cnt


def _merge_small(labels, lab, min_size):
    """Absorb fragments below ``min_size`` into the adjacent region of closest color."""
    labels = labels.copy()
    a, b = _neighbour_pairs(labels)
    while True:
        n = labels.max() + 1
        means, cnt = _region_means(labels, lab, n)
        small = np.flatnonzero((cnt > 0) & (cnt < min_size))
        if len(small) == 0 or (cnt > 0).sum() == 1:
            break
        victim = small[np.argmin(cnt[small])]
        flat = labels.ravel()
        la, lb = flat[a], flat[b]
        nb = np.union1d(lb[(la == victim) & (lb != victim)], la[(lb == victim) & (la != victim)])
        dist = ((means[nb] - means[victim]) ** 2).sum(axis=1)
        target = nb[np.argmin(dist)]
        labels[labels == victim] = target
    return _relabel_raster(labels)


def build_graph(labels: np.ndarray, lab: np.ndarray) -> SuperpixelGraph:
    h, w = labels.shape
    n = int(labels.max()) + 1
    means, cnt = _region_means(labels, lab, n)
    ys, xs = np.mgrid[0:h, 0:w]
    cx = np.bincount(labels.ravel(), weights=(xs.ravel() + 0.5) / w, minlength=n) / cnt
    cy = np.bincount(labels.ravel(), weights=(ys.ravel() + 0.5) / h, minlength=n) / cnt
    border = np.zeros((h, w), dtype=bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    bcount = np.bincount(labels[border], minlength=n)
    a, b = _neighbour_pairs(labels)
    la, lb = labels.ravel()[a], labels.ravel()[b]
    diff = la != lb
    pairs = np.stack([np.minimum(la[diff], lb[diff]), np.maximum(la[diff], lb[diff])], axis=1)
    edges = np.unique(pairs, axis=0) if len(pairs) else np.zeros((0, 2), dtype=int)
    return SuperpixelGraph(
        labels=labels,
        mean_lab=means,
        centroid=np.stack([cx, cy], axis=1),
        count=cnt.astype(np.int64),
        boundary_count=bcount.astype(np.int64),
        edges=edges.astype(np.int64),
    )


def slic_superpixels(image: np.ndarray, k_regions: int = 200, compactness: float = 20.0,
                     n_iter: int = 10) -> SuperpixelGraph:
    """Segment a 3×H×W sRGB image (values in [0, 1]) into roughly ``k_regions`` superpixels.

    Clustering runs in CIE-Lab with distance ``dc² + (ds/S)² m²`` where ``S`` is the grid
    interval and ``m`` the compactness. Disconnected fragments and regions smaller than
    a quarter of a grid cell are merged into their most similar neighbour.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected a 3×H×W image, got shape {image.shape}")
    _, h, w = image.shape
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"image {h}x{w} too small; both sides must be >= {MIN_SIDE}")
    if k_regions < 4:
        raise ValueError(f"k_regions must be >= 4, got {k_regions}")

    lab = rgb_to_lab(image)
    step = np.sqrt(h * w / k_regions)
    ny, nx = max(1, int(round(h / step))), max(1, int(round(w / step)))
    gy, gx = (np.arange(ny) + 0.5) * h / ny, (np.arange(nx) + 0.5) * w / nx
    S = max(h / ny, w / nx)

    # nudge seeds off edges: lowest gradient in the 3×3 neighbourhood
    padded = np.pad(lab, ((0, 0), (1, 1), (1, 1)), mode="edge")
    grad = ((padded[:, 2:, 1:-1] - padded[:, :-2, 1:-1]) ** 2).sum(0) + (
        (padded[:, 1:-1, 2:] - padded[:, 1:-1, :-2]) ** 2
    ).sum(0)
    seeds = []
    for y in gy:
        for x in gx:
            iy, ix = int(y), int(x)
            y0, y1 = max(iy - 1, 0), min(iy + 2, h)
            x0, x1 = max(ix - 1, 0), min(ix + 2, w)
            win = grad[y0:y1, x0:x1]
            # prefer the grid point itself unless a neighbour is strictly smoother
            if win.min() < grad[iy, ix]:
                dy, dx = np.unravel_index(np.argmin(win), win.shape)
                iy, ix = y0 + dy, x0 + dx
            seeds.append([*lab[:, iy, ix], iy + 0.5, ix + 0.5])
    centers = np.array(seeds)

    ys, xs = np.mgrid[0:h, 0:w] + 0.5
    spatial_w = (compactness / S) ** 2
    labels = np.full((h, w), -1, dtype=np.int64)
    for _ in range(n_iter):
        dist = np.full((h, w), np.inf)
        labels[:] = -1
        for k, (L, A, B, cy, cx) in enumerate(centers):
            y0, y1 = max(int(cy - S), 0), min(int(cy + S) + 1, h)
            x0, x1 = max(int(cx - S), 0), min(int(cx + S) + 1, w)
            win = lab[:, y0:y1, x0:x1]
            dc = (win[0] - L) ** 2 + (win[1] - A) ** 2 + (win[2] - B) ** 2
            ds = (ys[y0:y1, x0:x1] - cy) ** 2 + (xs[y0:y1, x0:x1] - cx) ** 2
            d = dc + ds * spatial_w
            better = d < dist[y0:y1, x0:x1]
            dist[y0:y1, x0:x1][better] = d[better]
            labels[y0:y1, x0:x1][better] = k
        feats = np.concatenate([lab, ys[None], xs[None]])
        valid = labels >= 0
        cnt = np.bincount(labels[valid], minlength=len(centers))
        sums = np.stack([np.bincount(labels[valid], weights=f[valid], minlength=len(centers)) for f in feats], 1)
        alive = cnt > 0
        centers[alive] = sums[alive] / cnt[alive, None]

    orphan = labels < 0
    if orphan.any():
        feats = np.concatenate([lab, ys[None], xs[None]])[:, orphan].T
        dc = ((feats[:, None, :3] - centers[None, :, :3]) ** 2).sum(2)
        ds = ((feats[:, None, 3:] - centers[None, :, 3:]) ** 2).sum(2)
        labels[orphan] = np.argmin(dc + ds * spatial_w, axis=1)

    labels = _components(labels)
    labels = _merge_small(labels, lab, max(1, int(S * S / 4)))
    return build_graph(labels, lab)
