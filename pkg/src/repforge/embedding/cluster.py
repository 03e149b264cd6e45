"""k-means++, silhouette-based k selection, DBSCAN, adjusted Rand index."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pca import EmbeddingError, _check_finite


def _pairwise(X: np.ndarray) -> np.ndarray:
    s = np.sum(X * X, axis=1)
    D = s[:, None] + s[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(D, 0.0)
    return np.sqrt(np.maximum(D, 0.0))


@dataclass(eq=False)
class KMeansResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list  # inertia after each Lloyd iteration of the winning run

    def __iter__(self):
        return iter((self.assignments, self.centroids, self.inertia))


def _plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    C = np.empty((k, X.shape[1]))
    C[0] = X[rng.integers(n)]
    d2 = np.sum((X - C[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        C[c] = X[i]
        d2 = np.minimum(d2, np.sum((X - C[c]) ** 2, axis=1))
    return C


def _assign(X, C):
    d2 = np.sum(X * X, axis=1)[:, None] - 2.0 * X @ C.T + np.sum(C * C, axis=1)[None, :]
    lab = np.argmin(d2, axis=1)
    return lab, np.maximum(d2[np.arange(X.shape[0]), lab], 0.0)


def _lloyd(X, C, max_iter):
    lab, dist = _assign(X, C)
    hist = [float(dist.sum())]
    for _ in range(max_iter):
        for c in range(C.shape[0]):
            members = lab == c
            if members.any():
                C[c] = X[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(dist))
                C[c] = X[far]
                dist[far] = 0.0
        new, dist = _assign(X, C)
        hist.append(float(dist.sum()))
        if np.array_equal(new, lab):
            break
        lab = new
    return lab, C, float(dist.sum()), hist


def kmeans(X, k: int, restarts: int = 10, seed: int = 0, max_iter: int = 300) -> KMeansResult:
    """Best of ``restarts`` k-means++ initialised Lloyd runs (lowest inertia)."""
    X = np.asarray(X, dtype=float)
    _check_finite(X)
    n = X.shape[0]
    if k < 1:
        raise EmbeddingError(f"k must be >= 1, got {k}")
    if k > n:
        raise EmbeddingError(f"k={k} exceeds number of points {n}")
    best = None
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(max(1, restarts))):
        rng = np.random.default_rng(child)
        lab, C, inertia, hist = _lloyd(X, _plusplus(X, k, rng), max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(lab, C, inertia, hist)
    return best


def silhouette_score(X, assignments) -> float:
    X = np.asarray(X, dtype=float)
    lab = np.asarray(assignments)
    labels = np.unique(lab)
    if labels.size < 2:
        raise EmbeddingError("silhouette needs at least 2 clusters")
    D = _pairwise(X)
    onehot = (lab[:, None] == labels[None, :]).astype(float)
    sizes = onehot.sum(axis=0)
    sums = D @ onehot
    own = np.searchsorted(labels, lab)
    n = X.shape[0]
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(n), own] / np.maximum(own_size - 1, 1), 0.0)
    mean_other = sums / sizes[None, :]
    mean_other[np.arange(n), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_size > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def select_k(X, k_range=range(2, 9), seed: int = 0, restarts: int = 10) -> int:
    """k in ``k_range`` maximizing the silhouette; ties go to the smaller k."""
    ks = sorted(int(k) for k in k_range)
    if not ks:
        raise EmbeddingError("empty k_range")
    n = np.asarray(X).shape[0]
    if ks[0] < 2 or ks[-1] > n - 1:
        raise EmbeddingError(f"k_range must lie within [2, {n - 1}]")
    best_k, best_s = None, -np.inf
    for k in ks:
        s = silhouette_score(X, kmeans(X, k, restarts, seed).assignments)
        if s > best_s + 1e-12:
            best_k, best_s = k, s
    return best_k


def dbscan(X, eps: float, min_pts: int) -> np.ndarray:
    """Density-based clusters; noise points are labelled -1.

    ``min_pts`` counts the point itself.
    """
    if eps <= 0:
        raise EmbeddingError("eps must be positive")
    if min_pts < 1:
        raise EmbeddingError("min_pts must be >= 1")
    X = np.asarray(X, dtype=float)
    _check_finite(X)
    n = X.shape[0]
    nbrs = [np.flatnonzero(row <= eps) for row in _pairwise(X)]
    core = np.array([nb.size >= min_pts for nb in nbrs])
    lab = np.full(n, -1)
    cid = 0
    for i in range(n):
        if lab[i] != -1 or not core[i]:
            continue
        lab[i] = cid
        stack = [i]
        while stack:
            p = stack.pop()
            if not core[p]:
                continue
            for q in nbrs[p]:
                if lab[q] == -1:
                    lab[q] = cid
                    stack.append(q)
        cid += 1
    return lab


def adjusted_rand_index(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb2(a.size)
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))
