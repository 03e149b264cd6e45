"""Z-score standardization and PCA by symmetric eigendecomposition."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EmbeddingError(ValueError):
    pass


def _check_finite(X: np.ndarray, what: str = "input") -> None:
    if not np.all(np.isfinite(X)):
        raise EmbeddingError(f"{what} contains non-finite entries")


@dataclass(eq=False)
class StandardizationStats:
    """Per-feature mean and std from a training split.

    ``row_ids`` records which rows produced the statistics, so callers can
    verify that no held-out row contributed.
    """
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray
    row_ids: tuple = field(default=())

    @classmethod
    def fit(cls, X, row_ids=None) -> "StandardizationStats":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1:
            raise EmbeddingError("standardization needs a non-empty 2-D array")
        _check_finite(X)
        mean = X.mean(axis=0)
        std = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
        scale = np.maximum(np.abs(mean), 1.0)
        constant = std <= 1e-12 * scale
        std = np.where(constant, 1.0, std)
        ids = tuple(row_ids) if row_ids is not None else ()
        if ids and len(ids) != X.shape[0]:
            raise EmbeddingError("row_ids length differs from number of rows")
        return cls(mean, std, constant, ids)

    @classmethod
    def identity(cls, d: int) -> "StandardizationStats":
        return cls(np.zeros(d), np.ones(d), np.zeros(d, dtype=bool))

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Z = (X - self.mean) / self.std
        Z[:, self.constant] = 0.0
        return Z

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


@dataclass(eq=False)
class PcaModel:
    components: np.ndarray  # (d, n_components), orthonormal columns
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    center: np.ndarray
    stats: StandardizationStats

    @property
    def n_components(self) -> int:
        return self.components.shape[1]

    def transform(self, X) -> np.ndarray:
        return (self.stats.transform(X) - self.center) @ self.components

    def inverse_transform(self, S) -> np.ndarray:
        return self.stats.inverse_transform(np.asarray(S, dtype=float) @ self.components.T + self.center)


def pca_fit(X, n_components: int | None = None, standardize: bool = False, row_ids=None) -> PcaModel:
    """Principal axes of the sample covariance.

    Each component is signed so that its largest-magnitude loading is
    positive. With ``standardize`` the z-score statistics are fitted on ``X``
    and stored in the model.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise EmbeddingError("pca_fit expects a 2-D array")
    _check_finite(X)
    n, d = X.shape
    k = d if n_components is None else int(n_components)
    if not 1 <= k <= d:
        raise EmbeddingError(f"n_components={k} must lie in [1, {d}]")
    if n < 2 or not (n > d or n > k):
        raise EmbeddingError(f"too few rows ({n}) for {k} components of {d} features")
    stats = StandardizationStats.fit(X, row_ids) if standardize else StandardizationStats.identity(d)
    Z = stats.transform(X)
    center = Z.mean(axis=0)
    C = np.cov(Z - center, rowvar=False, ddof=1).reshape(d, d)
    w, V = np.linalg.eigh(C)
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    V = V[:, order]
    pivot = np.argmax(np.abs(V), axis=0)
    V = V * np.where(V[pivot, np.arange(d)] < 0, -1.0, 1.0)
    total = w.sum()
    ratio = w / total if total > 0 else np.zeros_like(w)
    return PcaModel(V[:, :k], w[:k], ratio[:k], center, stats)
