"""Random forests (bagged CART with per-node feature subsampling)."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..config import n_workers
from .tree import LearnerError, Tree, tree_fit


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 300
    max_depth: int | None = None
    min_leaf: int = 2
    feature_subsample: int | float | str | None = None  # None: sqrt (classify) / third (regress)
    bootstrap: bool = True


def tree_seeds(seed: int, n_trees: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_trees)]


def bootstrap_indices(tree_seed: int, n: int) -> np.ndarray:
    return np.random.default_rng(tree_seed).integers(0, n, n)


def _fit_one(args):
    X, y, task, p, sub, s, n_classes = args
    idx = bootstrap_indices(s, X.shape[0]) if p.bootstrap else np.arange(X.shape[0])
    return tree_fit(X[idx], y[idx], task, p.max_depth, p.min_leaf, sub, seed=s + 1, n_classes=n_classes)


@dataclass(eq=False)
class ForestModel:
    task: str
    trees: list
    classes: np.ndarray | None
    n_features: int
    feature_names: tuple = ()
    params: ForestParams = field(default_factory=ForestParams)
    seeds: list = field(default_factory=list)

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise LearnerError(f"schema mismatch: model expects {self.n_features} features, got "
                               f"{X.shape[1] if X.ndim == 2 else X.shape}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Mean of per-tree leaf class distributions."""
        if self.task != "classify":
            raise LearnerError("predict_proba is for classification forests")
        X = self._check(X)
        return np.mean([t.predict_value(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        if self.task == "regress":
            return np.mean([t.predict_value(X)[:, 0] for t in self.trees], axis=0)
        # majority vote over per-tree predicted classes; ties go to the lower class
        votes = np.zeros((X.shape[0], self.classes.size))
        rows = np.arange(X.shape[0])
        for t in self.trees:
            votes[rows, np.argmax(t.predict_value(X), axis=1)] += 1
        return self.classes[np.argmax(votes, axis=1)]


def forest_fit(X, y, task: str = "classify", n_trees: int | None = None,
               params: ForestParams | None = None, seed: int = 0,
               feature_names=(), workers: int | None = None) -> ForestModel:
    p = params or ForestParams()
    if n_trees is not None:
        p = ForestParams(n_trees, p.max_depth, p.min_leaf, p.feature_subsample, p.bootstrap)
    if p.n_trees < 1:
        raise LearnerError("n_trees must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if task == "classify":
        classes, yy = np.unique(y, return_inverse=True)
        n_classes = classes.size
    elif task == "regress":
        classes, yy, n_classes = None, y.astype(float), None
    else:
        raise LearnerError(f"unknown task {task!r}")
    sub = p.feature_subsample or ("sqrt" if task == "classify" else "third")
    seeds = tree_seeds(seed, p.n_trees)
    jobs = [(X, yy, task, p, sub, s, n_classes) for s in seeds]
    w = workers if workers is not None else n_workers()
    if w > 1 and p.n_trees > 1:
        with ProcessPoolExecutor(max_workers=w) as ex:
            trees = list(ex.map(_fit_one, jobs, chunksize=max(1, p.n_trees // (4 * w))))
    else:
        trees = [_fit_one(j) for j in jobs]
    return ForestModel(task, trees, classes, X.shape[1], tuple(feature_names), p, seeds)


def forest_predict(model: ForestModel, X) -> np.ndarray:
    return model.predict(X)


def feature_importance(model) -> np.ndarray:
    """Mean decrease in impurity.

    Each tree's split decreases are summed per feature and normalized to 1;
    trees without splits are skipped; the average is renormalized.
    """
    trees = getattr(model, "trees", None)
    if not trees:
        raise LearnerError("model is not fitted")
    per = []
    for t in trees:
        imp = t.importances()
        s = imp.sum()
        if s > 0:
            per.append(imp / s)
    if not per:
        return np.zeros(model.n_features)
    avg = np.mean(per, axis=0)
    return avg / avg.sum()
