"""Metrics, fold plans, random search, EMG-impact differencing, correlations."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .config import derive_seed

RPE_LABELS = np.arange(1, 11)
METRIC_KEYS = ("mae", "mse", "rmse", "r2", "exact", "pm1", "precision_macro", "recall_macro", "f1_macro",
               "precision_weighted", "recall_weighted", "f1_weighted")


class EvaluationError(ValueError):
    pass


def confusion_matrix(y, yhat, labels=RPE_LABELS) -> np.ndarray:
    """Rows are true labels, columns predicted labels."""
    labels = np.asarray(labels)
    pos = {int(v): i for i, v in enumerate(labels)}
    C = np.zeros((labels.size, labels.size), dtype=int)
    for a, b in zip(np.asarray(y), np.asarray(yhat)):
        C[pos[int(a)], pos[int(b)]] += 1
    return C


def _prf(C: np.ndarray):
    tp = np.diag(C).astype(float)
    support = C.sum(axis=1).astype(float)
    predicted = C.sum(axis=0).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(predicted > 0, tp / predicted, 0.0)
        rec = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    present = support > 0
    w = support[present] / support[present].sum()
    out = {}
    for name, v in (("precision", prec), ("recall", rec), ("f1", f1)):
        out[f"{name}_macro"] = float(v[present].mean())
        out[f"{name}_weighted"] = float(w @ v[present])
    return out


def _regression_part(y: np.ndarray, yhat: np.ndarray) -> dict:
    err = yhat - y
    mse = float(np.mean(err**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(err**2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    return {"mae": float(np.mean(np.abs(err))), "mse": mse, "rmse": math.sqrt(mse), "r2": r2}


def _check_pair(y, yhat):
    y = np.asarray(y)
    yhat = np.asarray(yhat)
    if y.shape != yhat.shape or y.ndim != 1:
        raise EvaluationError("y and yhat must be 1-D of equal length")
    if y.size == 0:
        raise EvaluationError("empty input")
    return y, yhat


def _check_labels(v, what):
    if not np.all(np.isin(v, RPE_LABELS)):
        raise EvaluationError(f"{what} contains labels outside 1..10")


def classification_metrics(y, yhat) -> dict:
    """Metric bundle for integer RPE predictions (macro averages over classes present in ``y``)."""
    y, yhat = _check_pair(y, yhat)
    _check_labels(y, "y")
    _check_labels(yhat, "yhat")
    y = y.astype(int)
    yhat = yhat.astype(int)
    C = confusion_matrix(y, yhat)
    out = _regression_part(y.astype(float), yhat.astype(float))
    out["exact"] = float(np.mean(yhat == y))
    out["pm1"] = float(np.mean(np.abs(yhat - y) <= 1))
    out.update(_prf(C))
    out["confusion"] = C
    out["n"] = int(y.size)
    return out


def round_clamp(yhat) -> np.ndarray:
    """Nearest integer (halves round up), clamped to 1..10."""
    return np.clip(np.floor(np.asarray(yhat, dtype=float) + 0.5), 1, 10).astype(int)


def regression_metrics(y, yhat) -> dict:
    """Errors and ±1 accuracy on raw outputs; exact accuracy and F1 on rounded, clamped outputs."""
    y, yhat = _check_pair(y, yhat)
    _check_labels(y, "y")
    y = y.astype(int)
    yhat = yhat.astype(float)
    r = round_clamp(yhat)
    C = confusion_matrix(y, r)
    out = _regression_part(y.astype(float), yhat)
    out["exact"] = float(np.mean(r == y))
    out["pm1"] = float(np.mean(np.abs(yhat - y) <= 1))
    out.update(_prf(C))
    out["confusion"] = C
    out["n"] = int(y.size)
    return out


def pm1_hits(y, yhat) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return np.abs(np.asarray(yhat, dtype=float) - y) <= 1


def normal_ci(p: float, n: int, level: float = 0.95) -> tuple[float, float]:
    from scipy.stats import norm
    z = norm.ppf(0.5 + level / 2)
    half = z * math.sqrt(max(p * (1 - p), 0.0) / n)
    return max(0.0, p - half), min(1.0, p + half)


def bootstrap_ci(hits, seed: int = 0, n_boot: int = 2000, level: float = 0.95) -> tuple[float, float]:
    hits = np.asarray(hits, dtype=float)
    rng = np.random.default_rng(seed)
    means = hits[rng.integers(0, hits.size, (n_boot, hits.size))].mean(axis=1)
    a = (1 - level) / 2
    return float(np.quantile(means, a)), float(np.quantile(means, 1 - a))


# ---------------------------------------------------------------- fold plans

@dataclass(eq=False)
class FoldPlan:
    k: int
    fold: np.ndarray  # fold index per rep
    mode: str
    seed: int
    rep_ids: tuple = ()
    set_ids: tuple = ()

    def __post_init__(self):
        self.fold = np.asarray(self.fold, dtype=int)
        if self.k < 2:
            raise EvaluationError("need at least 2 folds")
        if self.fold.size and (self.fold.min() < 0 or self.fold.max() >= self.k):
            raise EvaluationError("fold index out of range")
        if self.fold.size and np.unique(self.fold).size != self.k:
            raise EvaluationError("every fold must contain at least one rep")
        if self.mode == "by-set" and self.set_ids:
            sets = np.asarray(self.set_ids)
            for s in np.unique(sets):
                if np.unique(self.fold[sets == s]).size > 1:
                    raise EvaluationError(f"set {s} spans folds")

    def test_idx(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.fold == f)

    def train_idx(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.fold != f)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold, minlength=self.k)


def make_fold_plan(rep_ids, k_folds: int = 4, mode: str = "rep-shuffle", seed: int = 0,
                   set_ids=None) -> FoldPlan:
    rep_ids = tuple(str(r) for r in rep_ids)
    n = len(rep_ids)
    if k_folds > n:
        raise EvaluationError(f"k_folds={k_folds} exceeds number of reps {n}")
    rng = np.random.default_rng(derive_seed(seed, "fold_plan", mode))
    fold = np.empty(n, dtype=int)
    if mode == "rep-shuffle":
        fold[rng.permutation(n)] = np.arange(n) % k_folds
    elif mode == "by-set":
        if set_ids is None:
            set_ids = [r.rsplit("_", 1)[0] for r in rep_ids]
        sets = np.asarray([str(s) for s in set_ids])
        uniq, counts = np.unique(sets, return_counts=True)
        if uniq.size < k_folds:
            raise EvaluationError(f"by-set mode needs >= {k_folds} sets, got {uniq.size}")
        load = np.zeros(k_folds, dtype=int)
        for s in rng.permutation(uniq.size):
            f = int(np.argmin(load))  # lightest fold, lowest index on ties
            fold[sets == uniq[s]] = f
            load[f] += counts[s]
        set_ids = tuple(sets)
    else:
        raise EvaluationError(f"unknown fold mode {mode!r}")
    return FoldPlan(k_folds, fold, mode, seed, rep_ids, tuple(set_ids) if set_ids is not None else ())


# ---------------------------------------------------------------- reports

@dataclass(eq=False)
class EvalReport:
    model: str
    task: str
    emg_mode: str
    per_fold: list
    pooled: dict
    spec_hash: str = ""
    seed: int = 0
    plan: FoldPlan | None = None
    predictions: dict = field(default_factory=dict)  # rep_id -> (fold, y, yhat)
    importance: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @property
    def aggregate(self) -> dict:
        """Mean of per-fold scalar metrics."""
        return {k: float(np.mean([f[k] for f in self.per_fold])) for k in METRIC_KEYS}

    def rows(self) -> list[dict]:
        base = {"model": self.model, "task": self.task, "emg_mode": self.emg_mode}
        out = [{**base, "fold": str(i), **{k: m[k] for k in METRIC_KEYS}} for i, m in enumerate(self.per_fold)]
        out.append({**base, "fold": "mean", **self.aggregate})
        out.append({**base, "fold": "pooled", **{k: self.pooled[k] for k in METRIC_KEYS}})
        return out


def fold_report(model, task, emg_mode, folds: list, seed=0, plan=None, spec_hash="") -> EvalReport:
    """Assemble a report from per-fold ``(rep_ids, y, yhat)`` triples."""
    metric = classification_metrics if task == "classify" else regression_metrics
    per, preds = [], {}
    ys, yh = [], []
    for f, (ids, y, yhat) in enumerate(folds):
        per.append(metric(y, yhat))
        ys.append(np.asarray(y))
        yh.append(np.asarray(yhat))
        for r, a, b in zip(ids, y, yhat):
            preds[r] = (f, a, b)
    y_all, yhat_all = np.concatenate(ys), np.concatenate(yh)
    pooled = metric(y_all, yhat_all)
    hits = pm1_hits(y_all, yhat_all)
    ci = {"pm1_normal": normal_ci(float(hits.mean()), hits.size),
          "pm1_bootstrap": bootstrap_ci(hits, derive_seed(seed, "bootstrap_ci"))}
    return EvalReport(model, task, emg_mode, per, pooled, spec_hash, seed, plan, preds, ci=ci)


# ---------------------------------------------------------------- random search

@dataclass(frozen=True)
class Range:
    kind: str  # uniform | loguniform | int | choice
    values: tuple

    def __post_init__(self):
        if self.kind not in ("uniform", "loguniform", "int", "choice"):
            raise EvaluationError(f"unknown range kind {self.kind!r}")
        if not self.values:
            raise EvaluationError("empty range")
        if self.kind != "choice":
            lo, hi = self.values
            if hi < lo or (self.kind == "loguniform" and lo <= 0):
                raise EvaluationError(f"invalid {self.kind} range {self.values}")

    def sample(self, rng: np.random.Generator):
        if self.kind == "choice":
            return self.values[int(rng.integers(len(self.values)))]
        lo, hi = self.values
        if self.kind == "uniform":
            return float(rng.uniform(lo, hi))
        if self.kind == "loguniform":
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        return int(rng.integers(int(lo), int(hi) + 1))

    @classmethod
    def parse(cls, text: str) -> "Range":
        """``uniform:0:1``, ``loguniform:1e-3:1``, ``int:2:10`` or ``choice:a,b,c``."""
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        if kind == "choice":
            vals = tuple(_auto(v.strip()) for v in rest.split(",") if v.strip())
            return cls(kind, vals)
        parts = rest.split(":")
        if len(parts) != 2:
            raise EvaluationError(f"cannot parse range {text!r}")
        return cls(kind, (float(parts[0]), float(parts[1])))


def _auto(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return {"none": None, "true": True, "false": False}.get(v.lower(), v)


@dataclass
class SearchResult:
    best: dict
    best_score: float
    trials: list  # (index, params, score) in trial order


def random_search(ranges: Mapping[str, Range], budget: int, objective: Callable[[dict], float],
                  seed: int = 0) -> SearchResult:
    """Maximize ``objective`` over ``budget`` independent draws; first best wins on ties."""
    if budget < 1:
        raise EvaluationError("budget must be >= 1")
    if not ranges:
        raise EvaluationError("no ranges to search")
    trials = []
    best, best_score = None, -np.inf
    for t in range(budget):
        rng = np.random.default_rng(derive_seed(seed, "random_search", t))
        params = {name: ranges[name].sample(rng) for name in sorted(ranges)}
        score = float(objective(params))
        trials.append((t, params, score))
        if best is None or score > best_score:
            best, best_score = params, score
    return SearchResult(best, best_score, trials)


# ---------------------------------------------------------------- EMG impact

@dataclass(frozen=True)
class ImpactRow:
    metric: str
    mean: float
    median: float
    std: float
    max: float
    min: float


def _key_and_metrics(r):
    if isinstance(r, EvalReport):
        return (r.model, r.task), r.aggregate
    return (r["model"], r["task"]), r


def emg_impact_table(with_emg, without_emg, metrics=("exact", "pm1", "f1_macro", "f1_weighted",
                                                     "rmse", "mae", "r2")) -> list[ImpactRow]:
    """Per-metric summary of (with EMG − without EMG) over model pairs matched by (model, task)."""
    a = dict(_key_and_metrics(r) for r in with_emg)
    b = dict(_key_and_metrics(r) for r in without_emg)
    if set(a) != set(b) or len(a) != len(with_emg) or len(b) != len(without_emg):
        raise EvaluationError(f"unpaired reports: {sorted(set(a) ^ set(b))}")
    if not a:
        raise EvaluationError("no reports")
    keys = sorted(a)
    rows = []
    for m in metrics:
        if not all(m in a[k] and m in b[k] for k in keys):
            continue
        d = np.array([a[k][m] - b[k][m] for k in keys], dtype=float)
        rows.append(ImpactRow(m, float(d.mean()), float(np.median(d)), float(d.std()), float(d.max()), float(d.min())))
    return rows


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise EvaluationError("pearson needs two equal-length series of length >= 2")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(xc @ xc), math.sqrt(yc @ yc)
    if sx == 0 or sy == 0:
        raise EvaluationError("zero variance")
    return float(np.clip(xc @ yc / (sx * sy), -1.0, 1.0))
