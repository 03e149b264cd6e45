"""SMOTE oversampling with provenance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pca import EmbeddingError, _check_finite


@dataclass(eq=False)
class SmoteResult:
    X: np.ndarray
    y: np.ndarray
    synthetic: np.ndarray  # bool mask over output rows
    base: np.ndarray  # for synthetic rows: index of the seed original (else -1)
    neighbor: np.ndarray  # for synthetic rows: index of the partner original (else -1)
    u: np.ndarray  # interpolation weights (nan for originals)


def smote_with_provenance(X, y, k_neighbors: int = 5, seed: int = 0) -> SmoteResult:
    """Oversample every class to the majority count.

    Originals come first, unchanged and in input order; synthetic rows follow,
    grouped by class. Each synthetic row is ``x + u * (nb - x)`` with ``u`` in
    (0, 1) and ``nb`` one of the ``k_neighbors`` nearest same-class originals
    that differ from ``x``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise EmbeddingError("X must be 2-D with one label per row")
    if k_neighbors < 1:
        raise EmbeddingError("k_neighbors must be >= 1")
    _check_finite(X)
    classes, counts = np.unique(y, return_counts=True)
    target = counts.max()
    rng = np.random.default_rng(seed)
    seen = {row.tobytes() for row in X}
    new_X, new_y, bases, nbs, us = [], [], [], [], []
    for c, cnt in zip(classes, counts):
        need = target - cnt
        if need == 0:
            continue
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise EmbeddingError(f"class {c!r} has a single member; cannot interpolate")
        P = X[idx]
        D = np.sqrt(np.maximum(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1), 0.0))
        D[D == 0] = np.inf  # self and exact duplicates are not neighbours
        if np.all(np.isinf(D)):
            raise EmbeddingError(f"class {c!r} has no two distinct members")
        made = 0
        while made < need:
            i = int(rng.integers(idx.size))
            finite = np.flatnonzero(np.isfinite(D[i]))
            if finite.size == 0:
                continue
            order = finite[np.argsort(D[i, finite], kind="stable")][:k_neighbors]
            j = int(order[rng.integers(order.size)])
            u = rng.random()
            if u == 0.0:
                continue
            x = P[i] + u * (P[j] - P[i])
            key = x.tobytes()
            if key in seen:
                continue
            seen.add(key)
            new_X.append(x)
            new_y.append(c)
            bases.append(idx[i])
            nbs.append(idx[j])
            us.append(u)
            made += 1
    n, m = X.shape[0], len(new_X)
    out_X = np.vstack([X] + ([np.array(new_X)] if m else []))
    out_y = np.concatenate([y, np.array(new_y, dtype=y.dtype)]) if m else y.copy()
    return SmoteResult(
        out_X, out_y,
        np.concatenate([np.zeros(n, bool), np.ones(m, bool)]),
        np.concatenate([np.full(n, -1), np.array(bases, dtype=int)]),
        np.concatenate([np.full(n, -1), np.array(nbs, dtype=int)]),
        np.concatenate([np.full(n, np.nan), np.array(us, dtype=float)]),
    )


def smote(X, y, k_neighbors: int = 5, seed: int = 0):
    r = smote_with_provenance(X, y, k_neighbors, seed)
    return r.X, r.y
