import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repforge.embedding import (EmbeddingError, StandardizationStats, adjusted_rand_index, dbscan, kmeans,
                                pca_fit, select_k, silhouette_score, smote, smote_with_provenance, tsne_embed)

# frozen from sklearn.metrics.silhouette_score / adjusted_rand_score, computed offline
SIL_X = [[-0.989, -0.368], [1.288, 0.194], [0.92, 0.577], [-0.636, 0.542], [-0.317, -0.322], [0.097, -1.526],
         [1.192, -0.671], [1.0, 0.136], [1.532, -0.66], [-0.312, 0.338], [-2.207, 0.828], [1.542, 1.127]]
SIL_LABELS = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]
SIL_ORACLE = -0.13709743239035002
ARI_ORACLE = 0.18181818181818182


def blobs(k, n_per, d=2, sep=10.0, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-sep, sep, (k, d))
    while min(np.linalg.norm(a - b) for i, a in enumerate(centers) for b in centers[i + 1:]) < sep / 2:
        centers = rng.uniform(-sep, sep, (k, d))
    X = np.vstack([c + rng.standard_normal((n_per, d)) for c in centers])
    return X, np.repeat(np.arange(k), n_per)


# ---------------------------------------------------------------- standardization / PCA

def test_standardization_constant_column():
    X = np.column_stack([np.arange(5.0), np.full(5, 7.0)])
    st_ = StandardizationStats.fit(X, row_ids=list("abcde"))
    Z = st_.transform(X)
    assert np.allclose(Z[:, 1], 0.0)
    assert np.isclose(Z[:, 0].std(ddof=1), 1.0)
    assert st_.row_ids == tuple("abcde")
    with pytest.raises(EmbeddingError):
        StandardizationStats.fit(X, row_ids=["a"])


def test_pca_line():
    rng = np.random.default_rng(0)
    t = rng.standard_normal(400)
    X = np.column_stack([t, t]) + 1e-3 * rng.standard_normal((400, 2))
    m = pca_fit(X)
    assert np.allclose(np.abs(m.components[:, 0]), 1 / np.sqrt(2), atol=1e-3)
    assert m.components[:, 0].max() > 0
    assert m.explained_variance_ratio[0] > 0.99


def test_pca_isotropic():
    X = np.random.default_rng(1).standard_normal((20000, 3))
    ev = pca_fit(X).explained_variance
    assert np.allclose(ev, 1.0, atol=0.05)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.booleans())
def test_pca_properties(seed, d, standardize):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, d)) @ rng.standard_normal((d, d)) + rng.uniform(-5, 5, d)
    m = pca_fit(X, standardize=standardize)
    V = m.components
    assert np.max(np.abs(V.T @ V - np.eye(d))) <= 1e-8
    assert np.all(np.diff(m.explained_variance) <= 1e-12)
    S = m.transform(X)
    assert np.max(np.abs(S.mean(axis=0))) < 1e-9
    assert np.allclose(S.var(axis=0, ddof=1), m.explained_variance, rtol=1e-8, atol=1e-10)
    assert np.max(np.abs(m.inverse_transform(S) - X)) < 1e-9


def test_pca_errors():
    with pytest.raises(EmbeddingError):
        pca_fit(np.array([[1.0, np.nan], [2.0, 3.0], [1.0, 1.0]]))
    with pytest.raises(EmbeddingError):
        pca_fit(np.zeros((5, 2)), n_components=3)


# ---------------------------------------------------------------- t-SNE

def test_tsne_deterministic_and_duplicates():
    X, _ = blobs(3, 20, d=5, seed=2)
    X = np.vstack([X, X[:1]])
    a = tsne_embed(X, perplexity=10, seed=4)
    b = tsne_embed(X, perplexity=10, seed=4)
    assert np.array_equal(a, b)
    diam = np.ptp(a, axis=0).max()
    assert np.linalg.norm(a[0] - a[-1]) < 0.05 * diam


def test_tsne_too_few_points():
    with pytest.raises(EmbeddingError):
        tsne_embed(np.random.default_rng(0).standard_normal((20, 3)), perplexity=30)


def test_tsne_small_blobs_separate():
    X, y = blobs(3, 30, d=8, seed=5)
    E = tsne_embed(X, perplexity=10, iters=500, seed=1)
    assert adjusted_rand_index(y, kmeans(E, 3, seed=0).assignments) >= 0.9


# ---------------------------------------------------------------- k-means

def test_kmeans_four_blobs():
    X, y = blobs(4, 50, seed=3)
    r = kmeans(X, 4, seed=0)
    assert adjusted_rand_index(y, r.assignments) >= 0.99
    assign, cent, inertia = r
    assert cent.shape == (4, 2) and inertia == r.inertia


def test_kmeans_k1_and_kn():
    X, _ = blobs(2, 10, seed=4)
    r = kmeans(X, 1)
    assert np.allclose(r.centroids[0], X.mean(axis=0))
    assert r.inertia == pytest.approx(X.var(axis=0).sum() * X.shape[0])
    assert kmeans(X, X.shape[0]).inertia == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_kmeans_history_non_increasing_and_reproducible(seed, k):
    X = np.random.default_rng(seed).standard_normal((30, 2))
    r = kmeans(X, k, restarts=3, seed=seed)
    assert all(b <= a + 1e-9 for a, b in zip(r.history, r.history[1:]))
    assert np.array_equal(r.assignments, kmeans(X, k, restarts=3, seed=seed).assignments)


# ---------------------------------------------------------------- silhouette / ARI / select_k

def test_silhouette_frozen_oracle():
    assert silhouette_score(SIL_X, SIL_LABELS) == pytest.approx(SIL_ORACLE, abs=1e-12)


def test_silhouette_four_points():
    X = [[0, 0], [0, 1], [10, 0], [10, 1]]
    b = (10 + np.sqrt(101)) / 2
    assert silhouette_score(X, [0, 0, 1, 1]) == pytest.approx(1 - 1 / b, abs=1e-12)
    assert silhouette_score(X, [0, 0, 1, 1]) > 0.9
    a, b = 10.0, (1 + np.sqrt(101)) / 2
    assert silhouette_score(X, [0, 1, 0, 1]) == pytest.approx((b - a) / max(a, b), abs=1e-12)
    assert silhouette_score(X, [0, 1, 0, 1]) < 0


def test_silhouette_random_labels_near_zero():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((400, 2))
    assert abs(silhouette_score(X, rng.integers(0, 3, 400))) < 0.1


def test_ari_frozen_and_identities():
    assert adjusted_rand_index([0, 0, 1, 1, 2, 2, 2, 0], [1, 1, 0, 0, 2, 2, 0, 0]) == pytest.approx(ARI_ORACLE,
                                                                                                   abs=1e-12)
    assert adjusted_rand_index([0, 0, 1, 1], [5, 5, 2, 2]) == 1.0


@pytest.mark.parametrize("k", [2, 4])
def test_select_k_planted(k):
    X, _ = blobs(k, 40, seed=10 + k)
    assert select_k(X, seed=0, restarts=5) == k


# ---------------------------------------------------------------- DBSCAN

def test_dbscan_examples():
    X, y = blobs(2, 40, sep=20, seed=6)
    X = X * 0.2  # intra scale about 0.2, inter about several units
    lab = dbscan(X, eps=0.6, min_pts=4)
    assert set(lab) == {0, 1}
    assert adjusted_rand_index(y, lab) == 1.0
    sparse = np.arange(20.0)[:, None] * 10
    assert np.all(dbscan(sparse, eps=1.0, min_pts=3) == -1)
    one = np.random.default_rng(0).standard_normal((50, 2)) * 0.1
    assert set(dbscan(one, eps=0.5, min_pts=3)) == {0}


# ---------------------------------------------------------------- SMOTE

def test_smote_balanced_is_identity():
    X = np.arange(8.0).reshape(4, 2)
    Xo, yo = smote(X, [0, 1, 0, 1])
    assert np.array_equal(Xo, X) and list(yo) == [0, 1, 0, 1]


def test_smote_ten_four():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((14, 3))
    y = np.array(["A"] * 10 + ["B"] * 4)
    r = smote_with_provenance(X, y, k_neighbors=3, seed=1)
    assert (r.y == "A").sum() == (r.y == "B").sum() == 10
    assert np.array_equal(r.X[:14], X)
    syn = np.flatnonzero(r.synthetic)
    assert syn.size == 6
    for s in syn:
        a, b = X[r.base[s]], X[r.neighbor[s]]
        assert y[r.base[s]] == y[r.neighbor[s]] == "B"
        v = r.X[s] - a
        d = b - a
        u = v @ d / (d @ d)
        assert 0 < u < 1
        assert np.linalg.norm(v - u * d) <= 1e-9
    assert len({row.tobytes() for row in r.X}) == r.X.shape[0]


def test_smote_singleton_rejected():
    with pytest.raises(EmbeddingError):
        smote(np.eye(4), [0, 0, 0, 1])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(2, 12), min_size=2, max_size=4))
def test_smote_properties(seed, counts):
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(len(counts)), counts)
    X = rng.standard_normal((y.size, 3))
    X0 = X.copy()
    r = smote_with_provenance(X, y, seed=seed)
    assert np.array_equal(X, X0)
    assert np.array_equal(r.X[:y.size], X0)
    assert len(set(np.bincount(r.y))) == 1
    assert len({row.tobytes() for row in r.X}) == r.X.shape[0]
    r2 = smote_with_provenance(X, y, seed=seed)
    assert np.array_equal(r.X, r2.X)
