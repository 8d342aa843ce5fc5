"""Seeded k-means (k-means++ init, Lloyd iterations) and nearest-center queries."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import DataError, derive_seed

EXHAUSTIVE_SEEDINGS = 32


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centers: np.ndarray        # (C, d)
    assignments: np.ndarray    # (n,) point index -> cluster index
    inertia: float
    history: tuple[float, ...] = ()  # inertia after each Lloyd step of the winning init

    @property
    def n_clusters(self) -> int:
        return len(self.centers)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == c)


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _inertia(points, centers, labels) -> float:
    d = points - centers[labels]
    return float(np.einsum("ij,ij->", d, d))


def _means(points, labels, k) -> np.ndarray:
    onehot = (labels[:, None] == np.arange(k)).astype(np.float64)
    return (onehot.T @ points) / onehot.sum(axis=0)[:, None]


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen]).min(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(points, points[idx:idx + 1])[:, 0])
    return points[chosen].copy()


def _fill_empty(points, centers, labels, d2):
    """Re-seed every empty cluster at the point farthest from its own center."""
    k = len(centers)
    for _ in range(k):
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if not len(empty):
            break
        own = d2[np.arange(len(points)), labels]
        own = np.where(counts[labels] > 1, own, -1.0)
        far = int(np.argmax(own))
        centers[empty[0]] = points[far]
        d2 = _sq_dists(points, centers)
        labels = d2.argmin(axis=1)
    return centers, labels, d2


def _lloyd(points, centers, max_iters, tol):
    k = len(centers)
    history = []
    d2 = _sq_dists(points, centers)
    labels = d2.argmin(axis=1)
    for _ in range(max_iters):
        centers, labels, d2 = _fill_empty(points, centers, labels, d2)
        new = _means(points, labels, k)
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        d2 = _sq_dists(points, centers)
        labels = d2.argmin(axis=1)
        centers, labels, d2 = _fill_empty(points, centers, labels, d2)
        history.append(_inertia(points, centers, labels))
        if shift < tol:
            break
    return centers, labels, history


def _transfer(points, labels, k) -> bool:
    """One sweep of single-point moves that strictly lower inertia; True if any point moved."""
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    centers = _means(points, labels, k)
    d2 = _sq_dists(points, centers)
    rows = np.arange(len(points))
    own = d2[rows, labels]
    cost_out = np.where(counts[labels] > 1, counts[labels] / np.maximum(counts[labels] - 1, 1) * own, -np.inf)
    gain_in = counts / (counts + 1) * d2
    gain_in[rows, labels] = np.inf
    if not np.any(gain_in.min(axis=1) < cost_out * (1 - 1e-12)):
        return False
    moved = False
    for i in range(len(points)):
        a = labels[i]
        if counts[a] == 1:
            continue
        d2 = ((centers - points[i]) ** 2).sum(axis=1)
        gain = counts / (counts + 1) * d2
        gain[a] = np.inf
        b = int(np.argmin(gain))
        if gain[b] < counts[a] / (counts[a] - 1) * d2[a] * (1 - 1e-12):
            x = points[i]
            centers[a] = (centers[a] * counts[a] - x) / (counts[a] - 1)
            centers[b] = (centers[b] * counts[b] + x) / (counts[b] + 1)
            counts[a] -= 1
            counts[b] += 1
            labels[i] = b
            moved = True
    return moved


def _refine(points, centers, max_iters, tol):
    """Lloyd to convergence, then point transfers to escape Lloyd fixed points, until neither helps."""
    k = len(centers)
    centers, labels, history = _lloyd(points, centers, max_iters, tol)
    for _ in range(max_iters):
        labels = labels.copy()
        if not _transfer(points, labels, k):
            break
        centers = _means(points, labels, k)
        centers, labels, more = _lloyd(points, centers, max_iters, tol)
        history.extend(more)
    return centers, labels, history


def kmeans_fit(points, C: int, seed: int, max_iters: int = 100, tol: float = 1e-6,
               n_init: int = 10) -> ClusterModel:
    """Cluster `points` into min(C, #distinct points) non-empty clusters.

    k-means++ seeding from a generator derived from `seed`, plus every
    k-subset of distinct points when there are few of them. Each start runs
    Lloyd, then single-point transfers that lower inertia. The best start
    (lowest inertia, earliest on ties) is returned.
    When C covers every distinct point, each distinct point is its own
    cluster, ordered by first occurrence.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or len(pts) == 0:
        raise DataError("kmeans_fit needs a non-empty 2-D point array")
    if not np.all(np.isfinite(pts)):
        raise DataError("kmeans_fit: non-finite coordinate")
    if C < 1:
        raise DataError("kmeans_fit: C must be >= 1")

    _, first, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    n_distinct = len(first)
    k = min(C, n_distinct)

    if k == n_distinct:
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(n_distinct)
        centers = pts[first[order]].copy()
        return ClusterModel(centers, rank[inverse], 0.0, (0.0,))

    rng = np.random.default_rng(derive_seed("kmeans", int(seed)))
    inits = [_kmeanspp(pts, k, rng) for _ in range(max(1, n_init))]
    # tiny inputs: also start from every k-subset of distinct points
    if math.comb(n_distinct, k) <= EXHAUSTIVE_SEEDINGS:
        distinct = pts[np.sort(first)]
        inits += [distinct[list(c)].copy() for c in itertools.combinations(range(n_distinct), k)]
    best, seen = None, set()
    for init in inits:
        # starts with the same first assignment (and no empty cluster) follow the same path
        first_labels = _sq_dists(pts, init).argmin(axis=1)
        key = first_labels.tobytes()
        if key in seen:
            continue
        if len(np.unique(first_labels)) == k:
            seen.add(key)
        centers, labels, history = _refine(pts, init, max_iters, tol)
        inertia = _inertia(pts, centers, labels)
        if best is None or inertia < best.inertia:
            best = ClusterModel(centers, labels, inertia, tuple(history))
    return best


def nearest_centers(point, model, K: int) -> list[int]:
    """Indices of the K centers closest to `point` (Euclidean), ties to the lower index."""
    centers = np.asarray(model.centers if hasattr(model, "centers") else model, dtype=np.float64)
    if centers.ndim == 1:
        centers = centers[:, None]
    if not 1 <= K <= len(centers):
        raise DataError(f"K={K} outside 1..{len(centers)}")
    p = np.atleast_1d(np.asarray(point, dtype=np.float64))
    d = np.sqrt(((centers - p) ** 2).sum(axis=1))
    return [int(i) for i in np.argsort(d, kind="stable")[:K]]
