"""Two-stage RPE experiment: EMG-derived labels, IMU-only estimators, RPE models.

Every fit inside a fold sees training rows only. Three guards are checked
per fold and raise :class:`LeakageError`:

* EMG values are read through :class:`EmgStore`, which logs row ids; in
  ``estimated`` mode no test row may appear in the log.
* SMOTE rows carry ``smote:`` ids; none may appear in a test design.
* Every :class:`StandardizationStats` records its source rows; none may be
  a test row.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import derive_seed
from .embedding import StandardizationStats, kmeans, pca_fit, select_k, smote_with_provenance, tsne_embed
from .evaluation import EvalReport, FoldPlan, fold_report
from .features import EMG_FEATURE_NAMES, IMU_FEATURE_NAMES
from .learners import (ForestParams, elastic_net_fit, feature_importance, forest_fit, gbt_fit, logistic_fit,
                       tree_fit)

EMG_MODES = ("off", "estimated", "ground_truth")


class PipelineError(ValueError):
    pass


class LeakageError(AssertionError):
    pass


# ---------------------------------------------------------------- data

class EmgStore:
    """EMG feature matrix that logs which rows were read."""

    def __init__(self, values: np.ndarray, rep_ids):
        self._values = np.asarray(values, dtype=float)
        self._ids = tuple(rep_ids)
        self.log: list[tuple[str, tuple]] = []

    def read(self, idx, purpose: str) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        self.log.append((purpose, tuple(self._ids[i] for i in idx)))
        return self._values[idx].copy()

    def read_ids(self) -> set:
        return {r for _, ids in self.log for r in ids}

    def clear_log(self) -> None:
        self.log.clear()

    @property
    def shape(self):
        return self._values.shape


@dataclass(eq=False)
class RepTable:
    rep_ids: tuple
    set_ids: tuple
    rpe: np.ndarray
    X: np.ndarray  # IMU features
    names: tuple
    emg: EmgStore | None
    emg_names: tuple = EMG_FEATURE_NAMES

    def __len__(self):
        return len(self.rep_ids)

    @classmethod
    def from_rows(cls, rows: list[dict], imu_names=IMU_FEATURE_NAMES, emg_names=EMG_FEATURE_NAMES) -> "RepTable":
        if not rows:
            raise PipelineError("no reps")
        ids = tuple(str(r["rep_id"]) for r in rows)
        X = np.array([[float(r[n]) for n in imu_names] for r in rows])
        has_emg = all(n in rows[0] for n in emg_names)
        E = np.array([[float(r[n]) for n in emg_names] for r in rows]) if has_emg else None
        return cls(ids, tuple(str(r["set_id"]) for r in rows), np.array([int(r["rpe"]) for r in rows]),
                   X, tuple(imu_names), EmgStore(E, ids) if E is not None else None, tuple(emg_names))

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]


# ---------------------------------------------------------------- model specs

@dataclass(frozen=True)
class ModelSpec:
    family: str  # rf | gbt | tree | logistic | elastic_net | ridge | lasso
    task: str  # classify | regress
    params: tuple = ()  # sorted (key, value) pairs

    def __post_init__(self):
        if self.task not in ("classify", "regress"):
            raise PipelineError(f"unknown task {self.task!r}")
        if self.family not in ("rf", "gbt", "tree", "logistic", "elastic_net", "ridge", "lasso"):
            raise PipelineError(f"unknown model family {self.family!r}")
        if self.family == "logistic" and self.task != "classify":
            raise PipelineError("logistic regression is a classifier")
        if self.family in ("elastic_net", "ridge", "lasso") and self.task != "regress":
            raise PipelineError(f"{self.family} is a regressor")

    @classmethod
    def make(cls, family: str, task: str, **params) -> "ModelSpec":
        return cls(family, task, tuple(sorted(params.items())))

    @property
    def kw(self) -> dict:
        return dict(self.params)

    @property
    def name(self) -> str:
        return f"{self.family}-{self.task}"

    def digest(self) -> str:
        blob = json.dumps([self.family, self.task, [[k, repr(v)] for k, v in self.params]])
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fit_model(spec: ModelSpec, X, y, seed: int, feature_names=()):
    kw = spec.kw
    if spec.family == "rf":
        p = ForestParams(n_trees=int(kw.get("n_trees", 300)), max_depth=kw.get("max_depth"),
                         min_leaf=int(kw.get("min_leaf", 2)), feature_subsample=kw.get("feature_subsample"))
        return forest_fit(X, y, spec.task, params=p, seed=seed, feature_names=feature_names)
    if spec.family == "gbt":
        return gbt_fit(X, y, spec.task, rounds=int(kw.get("rounds", 100)), depth=int(kw.get("depth", 3)),
                       learning_rate=float(kw.get("learning_rate", 0.1)), seed=seed,
                       min_leaf=int(kw.get("min_leaf", 1)), feature_subsample=kw.get("feature_subsample"),
                       feature_names=feature_names)
    if spec.family == "tree":
        return _TreeModel(X, y, spec.task, kw, seed)
    if spec.family == "logistic":
        return logistic_fit(X, y, l2=float(kw.get("l2", 1.0)), iters=int(kw.get("iters", 500)),
                            feature_names=feature_names)
    l1 = {"ridge": 0.0, "lasso": 1.0}.get(spec.family, float(kw.get("l1_ratio", 0.5)))
    return elastic_net_fit(X, y, alpha=float(kw.get("alpha", 0.01)), l1_ratio=l1, feature_names=feature_names)


class _TreeModel:
    """Single CART with label encoding, for use as an RPE model."""

    def __init__(self, X, y, task, kw, seed):
        self.task = task
        y = np.asarray(y)
        if task == "classify":
            self.classes, yi = np.unique(y, return_inverse=True)
        else:
            self.classes, yi = None, y.astype(float)
        self.tree = tree_fit(X, yi, task, kw.get("max_depth"), int(kw.get("min_leaf", 1)), seed=seed)
        self.trees = [self.tree]
        self.n_features = np.asarray(X).shape[1]

    def predict(self, X):
        v = self.tree.predict_value(X)
        return self.classes[np.argmax(v, axis=1)] if self.task == "classify" else v[:, 0]


def model_importance(model) -> np.ndarray | None:
    if hasattr(model, "flat_trees"):
        class _F:  # adapter: GBT rounds flattened to a tree list
            trees = model.flat_trees()
            n_features = model.n_features
        return feature_importance(_F)
    if getattr(model, "trees", None):
        return feature_importance(model)
    return None


# ---------------------------------------------------------------- options

@dataclass(frozen=True)
class PipelineOptions:
    emg_estimator: str = "gbt"  # family for the PC1/PC2/cluster estimators
    emg_estimator_params: tuple = (("depth", 3), ("learning_rate", 0.1), ("rounds", 100))
    perplexity: float = 30.0
    tsne_iters: int = 1000
    k_min: int = 2
    k_max: int = 8
    kmeans_restarts: int = 10
    smote_k: int = 5
    train_augment: str = "oof"  # oof | fit
    inner_folds: int = 3
    standardize: bool = True
    guards: bool = True

    @classmethod
    def from_config(cls, cfg) -> "PipelineOptions":
        d = cls()
        params = dict(d.emg_estimator_params)
        for k, v in cfg.items():
            if k.startswith("emg_estimator."):
                params[k.split(".", 1)[1]] = _num(v)
        return cls(
            emg_estimator=cfg.get("pipeline.emg_estimator", d.emg_estimator),
            emg_estimator_params=tuple(sorted(params.items())),
            perplexity=float(cfg.get("pipeline.perplexity", d.perplexity)),
            tsne_iters=int(cfg.get("pipeline.tsne_iters", d.tsne_iters)),
            k_min=int(cfg.get("pipeline.k_min", d.k_min)),
            k_max=int(cfg.get("pipeline.k_max", d.k_max)),
            kmeans_restarts=int(cfg.get("pipeline.kmeans_restarts", d.kmeans_restarts)),
            smote_k=int(cfg.get("pipeline.smote_k", d.smote_k)),
            train_augment=cfg.get("pipeline.train_augment", d.train_augment),
            inner_folds=int(cfg.get("pipeline.inner_folds", d.inner_folds)),
            standardize=str(cfg.get("pipeline.standardize", "true")).lower() in ("1", "true", "yes"),
        )


def _num(v):
    for cast in (int, float):
        try:
            return cast(v)
        except (TypeError, ValueError):
            pass
    return None if str(v).lower() == "none" else v


# ---------------------------------------------------------------- EMG labels

@dataclass(eq=False)
class EmgLabels:
    pc1: np.ndarray
    pc2: np.ndarray
    cluster: np.ndarray
    k: int
    stats: StandardizationStats
    pca: object
    embedding: np.ndarray
    row_ids: tuple = ()


def build_emg_labels(E_train, seed: int = 0, row_ids=None, opts: PipelineOptions | None = None) -> EmgLabels:
    """PC1/PC2 of standardized EMG features plus k-means clusters of their t-SNE embedding."""
    o = opts or PipelineOptions()
    E = np.asarray(E_train, dtype=float)
    n = E.shape[0]
    stats = StandardizationStats.fit(E, row_ids)
    if stats.constant.all():
        raise PipelineError("degenerate EMG features: every column is constant")
    Z = stats.transform(E)
    pca = pca_fit(Z, n_components=2)
    S = pca.transform(Z)
    perp = min(o.perplexity, (n - 1) / 3.0)
    if perp < 2:
        raise PipelineError(f"too few reps ({n}) for a t-SNE embedding")
    Y = tsne_embed(Z, perplexity=perp, iters=o.tsne_iters, seed=derive_seed(seed, "tsne"))
    k_hi = min(o.k_max, n - 1)
    k = select_k(Y, range(o.k_min, k_hi + 1), seed=derive_seed(seed, "select_k"), restarts=o.kmeans_restarts)
    cl = kmeans(Y, k, o.kmeans_restarts, derive_seed(seed, "kmeans")).assignments
    return EmgLabels(S[:, 0], S[:, 1], cl, k, stats, pca, Y, tuple(row_ids or ()))


# ---------------------------------------------------------------- estimators

@dataclass(eq=False)
class EmgEstimators:
    pc1: object
    pc2: object
    cluster: object
    k: int
    smote_ids: tuple  # row ids fed to the cluster classifier, synthetic ones prefixed "smote:"


def fit_emg_estimators(X_train, labels: EmgLabels, opts: PipelineOptions | None = None, seed: int = 0,
                       row_ids=None) -> EmgEstimators:
    """Regressors for PC1/PC2 and a SMOTE-balanced classifier for the cluster label."""
    o = opts or PipelineOptions()
    X = np.asarray(X_train, dtype=float)
    ids = tuple(row_ids) if row_ids is not None else tuple(str(i) for i in range(X.shape[0]))
    params = dict(o.emg_estimator_params)
    reg = ModelSpec.make(o.emg_estimator, "regress", **params)
    cls_family = "logistic" if o.emg_estimator in ("elastic_net", "ridge", "lasso") else o.emg_estimator
    clf = ModelSpec.make(cls_family, "classify", **(params if cls_family == o.emg_estimator else {}))
    m1 = fit_model(reg, X, labels.pc1, derive_seed(seed, "pc1"))
    m2 = fit_model(reg, X, labels.pc2, derive_seed(seed, "pc2"))

    y = np.asarray(labels.cluster)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise PipelineError("cluster label has a single class")
    # singleton clusters cannot be interpolated; they join the data unbalanced
    ok = np.isin(y, classes[counts >= 2])
    sm = smote_with_provenance(X[ok], y[ok], o.smote_k, derive_seed(seed, "smote"))
    ok_ids = [ids[i] for i in np.flatnonzero(ok)]
    syn_ids = [f"smote:{i}" for i in range(int(sm.synthetic.sum()))]
    Xc = np.vstack([sm.X, X[~ok]])
    yc = np.concatenate([sm.y, y[~ok]])
    cid = tuple(ok_ids + syn_ids + [ids[i] for i in np.flatnonzero(~ok)])
    m3 = fit_model(clf, Xc, yc, derive_seed(seed, "cluster"))
    return EmgEstimators(m1, m2, m3, labels.k, cid)


def augmentation_names(k: int) -> tuple:
    return ("est_pc1", "est_pc2") + tuple(f"est_cluster_{c}" for c in range(k))


def augment(X_imu, estimators: EmgEstimators | None) -> np.ndarray:
    """Append estimated PC1, PC2 and a one-hot estimated cluster; identity when ``estimators`` is None."""
    X = np.asarray(X_imu, dtype=float)
    if estimators is None:
        return X.copy()
    onehot = np.zeros((X.shape[0], estimators.k))
    c = np.asarray(estimators.cluster.predict(X), dtype=int)
    onehot[np.arange(X.shape[0]), c] = 1.0
    return np.column_stack([X, estimators.pc1.predict(X), estimators.pc2.predict(X), onehot])


# ---------------------------------------------------------------- guards

@dataclass
class FoldAudit:
    fold: int
    emg_mode: str
    train_ids: frozenset
    test_ids: frozenset
    emg_reads: frozenset = frozenset()
    stats_rows: list = field(default_factory=list)  # one tuple of row ids per fitted standardization
    smote_ids: list = field(default_factory=list)  # one tuple per SMOTE-fed classifier
    test_design_ids: tuple = ()


def check_fold(audit: FoldAudit) -> None:
    test = audit.test_ids
    if audit.emg_mode != "ground_truth":
        leaked = audit.emg_reads & test
        if leaked:
            raise LeakageError(f"fold {audit.fold}: EMG values of {len(leaked)} test reps were read")
    if any(str(r).startswith("smote:") for r in audit.test_design_ids):
        raise LeakageError(f"fold {audit.fold}: synthetic SMOTE rows entered the test split")
    if set(audit.test_design_ids) != set(test):
        raise LeakageError(f"fold {audit.fold}: test design rows differ from the fold's test reps")
    for ids in audit.smote_ids:
        bad = {r for r in ids if not str(r).startswith("smote:")} - audit.train_ids
        if bad:
            raise LeakageError(f"fold {audit.fold}: SMOTE input contains non-training rows")
    for rows in audit.stats_rows:
        if not rows:
            raise LeakageError(f"fold {audit.fold}: standardization without recorded source rows")
        if set(rows) & test:
            raise LeakageError(f"fold {audit.fold}: standardization statistics used test rows")


# ---------------------------------------------------------------- experiment

def _inner_plan(n: int, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    fold = np.empty(n, dtype=int)
    fold[rng.permutation(n)] = np.arange(n) % k
    return fold


def run_fold(table: RepTable, spec: ModelSpec, emg_mode: str, tr: np.ndarray, te: np.ndarray,
             seed: int, opts: PipelineOptions, fold: int = 0):
    """Fit everything on ``tr`` and predict ``te``. Returns ``(yhat, importance, names, audit, extra)``."""
    ids = np.asarray(table.rep_ids)
    tr_ids, te_ids = tuple(ids[tr]), tuple(ids[te])
    audit = FoldAudit(fold, emg_mode, frozenset(tr_ids), frozenset(te_ids))
    if table.emg is not None:
        table.emg.clear_log()
    X_tr, X_te = table.X[tr], table.X[te]
    names = list(table.names)
    extra = {}
    if opts.standardize:
        st = StandardizationStats.fit(X_tr, tr_ids)
        audit.stats_rows.append(st.row_ids)
        X_tr, X_te = st.transform(X_tr), st.transform(X_te)

    if emg_mode == "estimated":
        if table.emg is None:
            raise PipelineError("estimated EMG mode needs EMG features")
        E_tr = table.emg.read(tr, "label construction")
        labels = build_emg_labels(E_tr, derive_seed(seed, "labels"), tr_ids, opts)
        audit.stats_rows.append(labels.stats.row_ids)
        est = fit_emg_estimators(X_tr, labels, opts, derive_seed(seed, "estimators"), tr_ids)
        audit.smote_ids.append(est.smote_ids)
        extra["k"] = labels.k
        if opts.train_augment == "oof":
            inner = _inner_plan(len(tr), min(opts.inner_folds, len(tr)), derive_seed(seed, "inner"))
            A_tr = np.zeros((len(tr), 2 + labels.k))
            for g in range(inner.max() + 1):
                a, b = np.flatnonzero(inner != g), np.flatnonzero(inner == g)
                sub = EmgLabels(labels.pc1[a], labels.pc2[a], labels.cluster[a], labels.k, labels.stats,
                                labels.pca, labels.embedding[a], tuple(tr_ids[i] for i in a))
                try:
                    e = fit_emg_estimators(X_tr[a], sub, opts, derive_seed(seed, "inner", g),
                                           [tr_ids[i] for i in a])
                except PipelineError:
                    e = est  # an inner split lost a cluster; fall back to the full-train estimators
                audit.smote_ids.append(e.smote_ids)
                A_tr[b] = augment(X_tr[b], e)[:, X_tr.shape[1]:]
            X_tr = np.column_stack([X_tr, A_tr])
        else:
            X_tr = augment(X_tr, est)
        X_te = augment(X_te, est)
        names += list(augmentation_names(labels.k))
        extra["labels"] = labels
    elif emg_mode == "ground_truth":
        if table.emg is None:
            raise PipelineError("ground_truth EMG mode needs EMG features")
        E_tr, E_te = table.emg.read(tr, "train features"), table.emg.read(te, "test features")
        if opts.standardize:
            st = StandardizationStats.fit(E_tr, tr_ids)
            audit.stats_rows.append(st.row_ids)
            E_tr, E_te = st.transform(E_tr), st.transform(E_te)
        X_tr, X_te = np.column_stack([X_tr, E_tr]), np.column_stack([X_te, E_te])
        names += list(table.emg_names)
    elif emg_mode != "off":
        raise PipelineError(f"unknown EMG mode {emg_mode!r}")

    if table.emg is not None:
        audit.emg_reads = frozenset(table.emg.read_ids())
    audit.test_design_ids = te_ids
    if opts.guards:
        check_fold(audit)

    model = fit_model(spec, X_tr, table.rpe[tr], derive_seed(seed, "rpe_model"), tuple(names))
    yhat = model.predict(X_te)
    if spec.task == "classify":
        yhat = np.asarray(yhat, dtype=int)
    imp = model_importance(model)
    return yhat, imp, names, audit, extra


def run_rpe_experiment(table: RepTable, spec: ModelSpec, emg_mode: str, plan: FoldPlan, seed: int = 0,
                       opts: PipelineOptions | None = None) -> EvalReport:
    o = opts or PipelineOptions()
    if emg_mode not in EMG_MODES:
        raise PipelineError(f"emg_mode must be one of {EMG_MODES}")
    if plan.fold.size != len(table):
        raise PipelineError("fold plan does not cover the rep table")
    if plan.rep_ids and tuple(plan.rep_ids) != tuple(table.rep_ids):
        raise PipelineError("fold plan rep ids differ from the table's")
    folds, imps, audits, ks = [], [], [], []
    for f in range(plan.k):
        tr, te = plan.train_idx(f), plan.test_idx(f)
        if spec.task == "classify" and np.unique(table.rpe[tr]).size < 2:
            raise PipelineError(f"fold {f}: fewer than 2 RPE classes in training data")
        yhat, imp, names, audit, extra = run_fold(table, spec, emg_mode, tr, te,
                                                  derive_seed(seed, "fold", f), o, f)
        folds.append(([table.rep_ids[i] for i in te], table.rpe[te], yhat))
        audits.append(audit)
        ks.append(extra.get("k"))
        if imp is not None:
            imps.append(dict(zip(names, imp)))
    report = fold_report(spec.name, spec.task, emg_mode, folds, seed, plan, spec.digest())
    if imps:
        # clusters may differ per fold, so average over the union of names (absent = 0)
        allnames = list(dict.fromkeys(n for d in imps for n in d))
        report.importance = {n: float(np.mean([d.get(n, 0.0) for d in imps])) for n in allnames}
    report.notes = {"audits": audits, "k_per_fold": ks, "options": asdict(o)}
    return report


def extract_rows(raw_sets, dsp_params=None, seg_params=None, palm=None):
    """Align, segment and featurize raw sets. Returns ``(rows, rejects)``; rejects are count mismatches."""
    from .dsp import align_set
    from .features import rep_row
    from .segmentation import CountMismatch, segment_set
    rows, rejects = [], []
    for raw in raw_sets:
        aligned = align_set(raw, dsp_params)
        try:
            reps = segment_set(aligned, palm, params=seg_params)
        except CountMismatch as exc:
            rejects.append(exc)
            continue
        rows.extend(rep_row(r, palm) for r in reps)
    return rows, rejects


__all__ = [
    "EMG_MODES", "PipelineError", "LeakageError", "EmgStore", "RepTable", "ModelSpec", "fit_model",
    "PipelineOptions", "EmgLabels", "build_emg_labels", "EmgEstimators", "fit_emg_estimators", "augment",
    "augmentation_names", "FoldAudit", "check_fold", "run_fold", "run_rpe_experiment", "extract_rows",
]
