"""Exact (dense-gradient) t-SNE."""
from __future__ import annotations

import numpy as np

from .pca import EmbeddingError, _check_finite


def _sq_dists(X: np.ndarray) -> np.ndarray:
    s = np.sum(X * X, axis=1)
    D = s[:, None] + s[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def conditional_probabilities(D: np.ndarray, perplexity: float, tol: float = 1e-5,
                              max_iter: int = 100) -> np.ndarray:
    """Row-wise Gaussian affinities whose entropy matches ``log(perplexity)``."""
    n = D.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            p = np.exp(-d * beta)
            s = p.sum()
            H = np.log(s) + beta * np.sum(d * p) / s
            if abs(H - target) < tol:
                break
            if H > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        P[i, np.arange(n) != i] = p / s
    return P


def tsne_embed(X, perplexity: float = 30.0, iters: int = 1000, seed: int = 0,
               learning_rate: float = 200.0, exaggeration: float = 12.0,
               exaggeration_iters: int = 250, dim: int = 2) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    _check_finite(X)
    n = X.shape[0]
    if perplexity <= 0 or n < 3 * perplexity:
        raise EmbeddingError(f"perplexity {perplexity} too large for n={n} (need n >= 3*perplexity)")
    P = conditional_probabilities(_sq_dists(X), perplexity)
    P = (P + P.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)
    rng = np.random.default_rng(seed)
    Y = 1e-4 * rng.standard_normal((n, dim))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(iters):
        exag = exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < exaggeration_iters else 0.8
        num = 1.0 / (1.0 + _sq_dists(Y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    return Y
