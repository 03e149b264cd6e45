from .cluster import KMeansResult, adjusted_rand_index, dbscan, kmeans, select_k, silhouette_score
from .pca import EmbeddingError, PcaModel, StandardizationStats, pca_fit
from .smote import SmoteResult, smote, smote_with_provenance
from .tsne import tsne_embed

__all__ = [
    "EmbeddingError", "StandardizationStats", "PcaModel", "pca_fit", "tsne_embed",
    "KMeansResult", "kmeans", "silhouette_score", "select_k", "dbscan", "adjusted_rand_index",
    "SmoteResult", "smote", "smote_with_provenance",
]
