"""CART trees stored as flat arrays."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LearnerError(ValueError):
    pass


LEAF = -1


@dataclass(eq=False)
class Tree:
    """Flat binary tree. Node 0 is the root; ``left[i] == LEAF`` marks a leaf.

    ``value`` holds the class distribution (classify) or the mean (regress,
    one column). ``decrease`` is the weighted impurity decrease of each split,
    ``n_samples * impurity - n_left * imp_left - n_right * imp_right``.
    """
    task: str
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray
    decrease: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.left[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        active = self.left[node] != LEAF
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.left[node] != LEAF
        return node

    def predict_value(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def importances(self) -> np.ndarray:
        imp = np.zeros(self.n_features)
        internal = self.left != LEAF
        np.add.at(imp, self.feature[internal], self.decrease[internal])
        return imp

    def to_dict(self) -> dict:
        return {
            "task": self.task, "n_features": self.n_features,
            **{k: getattr(self, k).tolist() for k in
               ("feature", "threshold", "left", "right", "value", "n_samples", "impurity", "decrease")},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        ints = ("feature", "left", "right", "n_samples")
        arrs = {k: np.asarray(d[k], dtype=int if k in ints else float)
                for k in ("feature", "threshold", "left", "right", "value", "n_samples", "impurity", "decrease")}
        return cls(task=d["task"], n_features=int(d["n_features"]), **arrs)


def _best_split(Xn, yn, feats, task, n_classes, min_leaf):
    """Best ``(score, feature, threshold)`` over ``feats``; score is the children's impurity mass."""
    m = Xn.shape[0]
    cols = Xn[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    i = np.arange(1, m)  # left size
    valid = (xs[1:] > xs[:-1]) & (i >= min_leaf)[:, None] & ((m - i) >= min_leaf)[:, None]
    if not valid.any():
        return None
    if task == "classify":
        oh = np.zeros((m, n_classes))
        oh[np.arange(m), yn] = 1.0
        cl = np.cumsum(oh[order], axis=0)[:-1]  # (m-1, f, C)
        cr = oh.sum(axis=0) - cl
        nl, nr = i[:, None].astype(float), (m - i)[:, None].astype(float)
        score = nl - (cl**2).sum(-1) / nl + nr - (cr**2).sum(-1) / nr
    else:
        ys = yn[order]
        s1 = np.cumsum(ys, axis=0)[:-1]
        s2 = np.cumsum(ys**2, axis=0)[:-1]
        t1, t2 = yn.sum(), (yn**2).sum()
        nl, nr = i[:, None].astype(float), (m - i)[:, None].astype(float)
        score = (s2 - s1**2 / nl) + ((t2 - s2) - (t1 - s1) ** 2 / nr)
    score = np.where(valid, score, np.inf)
    flat = int(np.argmin(score))
    pos, f = divmod(flat, len(feats))
    lo, hi = xs[pos, f], xs[pos + 1, f]
    thr = lo + (hi - lo) / 2.0
    if not (lo <= thr < hi):
        thr = lo
    return float(score[pos, f]), int(feats[f]), float(thr)


def _node_impurity(yn, task, n_classes):
    if task == "classify":
        p = np.bincount(yn, minlength=n_classes) / yn.size
        return 1.0 - float(np.sum(p**2)), p
    mu = float(yn.mean())
    return float(np.mean((yn - mu) ** 2)), np.array([mu])


def tree_fit(X, y, task: str = "classify", max_depth: int | None = None, min_leaf: int = 1,
             feature_subsample: int | float | str | None = None, seed: int = 0,
             n_classes: int | None = None) -> Tree:
    """Greedy CART.

    For ``classify``, ``y`` must already be encoded as ``0..n_classes-1``.
    ``feature_subsample`` is the number of features drawn per node (an int,
    a fraction, ``"sqrt"``, ``"third"`` or None for all). When none of the
    drawn features admits a split, further features are drawn before the
    node becomes a leaf.
    """
    X = np.asarray(X, dtype=float)
    if task not in ("classify", "regress"):
        raise LearnerError(f"unknown task {task!r}")
    if X.ndim != 2 or X.shape[0] != len(y):
        raise LearnerError("X must be 2-D with one target per row")
    if not np.all(np.isfinite(X)):
        raise LearnerError("non-finite feature values")
    n, d = X.shape
    if n < 1:
        raise LearnerError("empty training set")
    if min_leaf < 1:
        raise LearnerError(f"min_leaf must be >= 1, got {min_leaf}")
    if task == "classify":
        y = np.asarray(y, dtype=int)
        n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    else:
        y = np.asarray(y, dtype=float)
        n_classes = 1
    k = _resolve_subsample(feature_subsample, d)
    rng = np.random.default_rng(seed)

    feature, threshold, left, right, value, nsamp, impurity, decrease = ([] for _ in range(8))

    def new_node(idx):
        imp, val = _node_impurity(y[idx], task, n_classes)
        feature.append(0)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(val)
        nsamp.append(idx.size)
        impurity.append(imp)
        decrease.append(0.0)
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        m = idx.size
        if impurity[node] <= 1e-15 or m < 2 * min_leaf or (max_depth is not None and depth >= max_depth):
            continue
        Xn, yn = X[idx], y[idx]
        perm = rng.permutation(d)
        best = None
        for start in range(0, d, k):
            best = _best_split(Xn, yn, perm[start:start + k], task, n_classes, min_leaf)
            if best is not None:
                break
        if best is None:
            continue
        score, f, thr = best
        go = Xn[:, f] <= thr
        li, ri = idx[go], idx[~go]
        feature[node], threshold[node] = f, thr
        decrease[node] = m * impurity[node] - score
        lnode, rnode = new_node(li), new_node(ri)
        left[node], right[node] = lnode, rnode
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))

    return Tree(task, np.array(feature, dtype=int), np.array(threshold, dtype=float),
                np.array(left, dtype=int), np.array(right, dtype=int), np.array(value, dtype=float),
                np.array(nsamp, dtype=int), np.array(impurity, dtype=float),
                np.maximum(np.array(decrease, dtype=float), 0.0), d)


def _resolve_subsample(spec, d: int) -> int:
    if spec is None or spec == "all":
        return d
    if spec == "sqrt":
        return max(1, int(np.sqrt(d)))
    if spec == "third":
        return max(1, d // 3)
    if isinstance(spec, float) and 0.0 < spec <= 1.0:
        return max(1, min(d, int(round(spec * d))))
    k = int(spec)
    if k < 1:
        raise LearnerError(f"feature_subsample must be >= 1, got {spec}")
    return min(k, d)
