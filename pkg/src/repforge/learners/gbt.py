"""Gradient-boosted regression trees (first-order leaves)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tree import LearnerError, Tree, tree_fit


def _softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


@dataclass(eq=False)
class GbtModel:
    """``F(x) = base + lr * sum(tree(x))``.

    Regression keeps one tree per round; classification keeps one tree per
    class per round and reads probabilities through a softmax.
    """
    task: str
    base: np.ndarray
    trees: list  # list of rounds, each a list of trees (length 1 or n_classes)
    learning_rate: float
    classes: np.ndarray | None
    n_features: int
    loss_history: list = field(default_factory=list)
    feature_names: tuple = ()
    params: dict = field(default_factory=dict)

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise LearnerError(f"schema mismatch: model expects {self.n_features} features")
        F = np.tile(self.base, (X.shape[0], 1))
        for rnd in self.trees:
            for k, t in enumerate(rnd):
                F[:, k] += self.learning_rate * t.predict_value(X)[:, 0]
        return F

    def predict_proba(self, X) -> np.ndarray:
        if self.task != "classify":
            raise LearnerError("predict_proba is for classification models")
        return _softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        F = self.decision_function(X)
        if self.task == "regress":
            return F[:, 0]
        return self.classes[np.argmax(F, axis=1)]

    def flat_trees(self) -> list:
        return [t for rnd in self.trees for t in rnd]


def gbt_fit(X, y, task: str = "regress", rounds: int = 100, depth: int = 3,
            learning_rate: float = 0.1, seed: int = 0, min_leaf: int = 1,
            feature_subsample=None, feature_names=()) -> GbtModel:
    if learning_rate <= 0:
        raise LearnerError(f"learning_rate must be > 0, got {learning_rate}")
    if rounds < 1:
        raise LearnerError("rounds must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    n = X.shape[0]
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(rounds)]
    params = {"rounds": rounds, "depth": depth, "learning_rate": learning_rate, "min_leaf": min_leaf}
    if task == "regress":
        yf = y.astype(float)
        base = np.array([yf.mean()])
        F = np.full(n, base[0])
        hist = [float(np.mean((yf - F) ** 2))]
        trees = []
        for r in range(rounds):
            t = tree_fit(X, yf - F, "regress", depth, min_leaf, feature_subsample, seeds[r])
            F = F + learning_rate * t.predict_value(X)[:, 0]
            trees.append([t])
            hist.append(float(np.mean((yf - F) ** 2)))
        return GbtModel(task, base, trees, learning_rate, None, X.shape[1], hist, tuple(feature_names), params)
    if task != "classify":
        raise LearnerError(f"unknown task {task!r}")
    classes, yi = np.unique(y, return_inverse=True)
    K = classes.size
    Y = np.eye(K)[yi]
    prior = np.clip(Y.mean(axis=0), 1e-12, None)
    base = np.log(prior) - np.log(prior).mean()
    F = np.tile(base, (n, 1))

    def loss(F):
        Z = F - F.max(axis=1, keepdims=True)
        return float(np.mean(np.log(np.exp(Z).sum(axis=1)) - Z[np.arange(n), yi]))

    hist = [loss(F)]
    trees = []
    for r in range(rounds):
        R = Y - _softmax(F)
        rnd = []
        step = np.zeros_like(F)
        for k in range(K):
            t = tree_fit(X, R[:, k], "regress", depth, min_leaf, feature_subsample, seeds[r] + k)
            step[:, k] = t.predict_value(X)[:, 0]
            rnd.append(t)
        F = F + learning_rate * step
        trees.append(rnd)
        hist.append(loss(F))
    return GbtModel(task, base, trees, learning_rate, classes, X.shape[1], hist, tuple(feature_names), params)


def gbt_predict(model: GbtModel, X) -> np.ndarray:
    return model.predict(X)
