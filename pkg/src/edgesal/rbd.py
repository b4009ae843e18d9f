"""Boundary-connectivity saliency prior on a superpixel graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .slic import SuperpixelGraph, slic_superpixels

# wCtr spreads at or below this (Lab units) count as constant
FLAT_TOL = 1e-9


@dataclass(frozen=True)
class RBDParams:
    k_regions: int = 200
    compactness: float = 20.0
    sigma_clr: float = 10.0
    delta_bndcon: float = 1.0
    sigma_spa: float = 0.25


@dataclass
class BndConScores:
    len_bnd: np.ndarray
    area: np.ndarray
    bndcon: np.ndarray


def geodesic_distances(graph: SuperpixelGraph) -> np.ndarray:
    """All-pairs shortest paths over the adjacency graph, edge cost d_app.

    Floyd-Warshall on a dense matrix; unreachable pairs stay at +inf.
    """
    n = graph.n_regions
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    if len(graph.edges):
        i, j = graph.edges[:, 0], graph.edges[:, 1]
        wts = graph.edge_weights
        d[i, j] = np.minimum(d[i, j], wts)
        d[j, i] = d[i, j]
    for k in range(n):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def geodesic_background_scores(graph: SuperpixelGraph, sigma_clr: float = 10.0) -> BndConScores:
    """Soft boundary connectivity of every region.

    ``Area(p) = sum_i exp(-d_geo(p, i)^2 / (2 sigma^2))`` and ``Len_bnd(p)`` is the same
    sum restricted to regions touching the image border.
    """
    d = geodesic_distances(graph)
    with np.errstate(over="ignore"):
        span = np.exp(-(d**2) / (2.0 * sigma_clr**2))
    area = span.sum(axis=1)
    len_bnd = span[:, graph.on_boundary].sum(axis=1)
    return BndConScores(len_bnd=len_bnd, area=area, bndcon=len_bnd / np.sqrt(area))


def background_probability(scores, delta_bndcon: float = 1.0) -> np.ndarray:
    if delta_bndcon <= 0:
        raise ValueError("delta_bndcon must be positive")
    bndcon = scores.bndcon if isinstance(scores, BndConScores) else np.asarray(scores, dtype=np.float64)
    return -np.expm1(-(bndcon**2) / (2.0 * delta_bndcon**2))


def weighted_contrast(graph: SuperpixelGraph, omega_bg, sigma_spa: float = 0.25) -> np.ndarray:
    """Background-weighted color contrast of every region against all regions."""
    omega_bg = np.asarray(omega_bg, dtype=np.float64)
    if omega_bg.shape != (graph.n_regions,):
        raise ValueError(f"omega_bg has shape {omega_bg.shape}, expected ({graph.n_regions},)")
    d_app = graph.appearance_distance()
    c = graph.centroid
    d_spa2 = ((c[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
    w_spa = np.exp(-d_spa2 / (2.0 * sigma_spa**2))
    return (d_app * w_spa) @ omega_bg


def normalize_regions(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi - lo <= FLAT_TOL:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def rbd_saliency(image: np.ndarray, params: RBDParams = RBDParams()) -> np.ndarray:
    """Return a 1×H×W saliency map in [0, 1] for a 3×H×W sRGB image."""
    graph = slic_superpixels(image, params.k_regions, params.compactness)
    scores = geodesic_background_scores(graph, params.sigma_clr)
    omega = background_probability(scores, params.delta_bndcon)
    wctr = weighted_contrast(graph, omega, params.sigma_spa)
    return graph.broadcast(normalize_regions(wctr))[None]
