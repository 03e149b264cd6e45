import dataclasses

import numpy as np
import pytest

from repforge import pipeline as pl
from repforge.embedding import StandardizationStats, adjusted_rand_index
from repforge.evaluation import FoldPlan, make_fold_plan
from repforge.features import EMG_FEATURE_NAMES, IMU_FEATURE_NAMES
from repforge.pipeline import (EmgStore, FoldAudit, LeakageError, ModelSpec, PipelineError, PipelineOptions,
                               RepTable, augment, augmentation_names, build_emg_labels, check_fold,
                               fit_emg_estimators, fit_model, run_rpe_experiment)

FAST = PipelineOptions(emg_estimator_params=(("depth", 2), ("learning_rate", 0.2), ("rounds", 15)),
                       tsne_iters=400, perplexity=15, kmeans_restarts=3, inner_folds=2)
RF = ModelSpec.make("rf", "classify", n_trees=25)


@pytest.fixture(scope="module")
def table(small_rows):
    return RepTable.from_rows(small_rows)


def planted(n_per=50, k=4, seed=0):
    """EMG features in ``k`` planted clusters; IMU features carry the cluster identity."""
    rng = np.random.default_rng(seed)
    c = np.repeat(np.arange(k), n_per)
    centers = rng.normal(0, 6, (k, 9))
    E = centers[c] + rng.standard_normal((c.size, 9))
    X = np.zeros((c.size, 55))
    X[:, :k] = np.eye(k)[c] * 3 + 0.3 * rng.standard_normal((c.size, k))
    X[:, k:] = rng.standard_normal((c.size, 55 - k))
    return X, E, c


# ---------------------------------------------------------------- guards (one corrupted audit per guard)

def clean_audit(**kw):
    base = dict(fold=0, emg_mode="estimated", train_ids=frozenset({"a", "b", "c"}), test_ids=frozenset({"d", "e"}),
                emg_reads=frozenset({"a", "b", "c"}), stats_rows=[("a", "b", "c")], smote_ids=[("a", "b", "smote:0")],
                test_design_ids=("d", "e"))
    base.update(kw)
    return FoldAudit(**base)


def test_clean_audit_passes():
    check_fold(clean_audit())


def test_guard_emg_read_of_test_rows():
    with pytest.raises(LeakageError, match="EMG values"):
        check_fold(clean_audit(emg_reads=frozenset({"a", "d"})))
    check_fold(clean_audit(emg_mode="ground_truth", emg_reads=frozenset({"a", "d"})))


def test_guard_smote_rows_in_test_split():
    with pytest.raises(LeakageError, match="SMOTE rows entered"):
        check_fold(clean_audit(test_design_ids=("d", "e", "smote:3")))


def test_guard_test_design_differs():
    with pytest.raises(LeakageError, match="test design"):
        check_fold(clean_audit(test_design_ids=("d",)))


def test_guard_smote_input_from_test_rows():
    with pytest.raises(LeakageError, match="SMOTE input"):
        check_fold(clean_audit(smote_ids=[("a", "d", "smote:0")]))


def test_guard_standardization_test_rows():
    with pytest.raises(LeakageError, match="standardization statistics"):
        check_fold(clean_audit(stats_rows=[("a", "b", "e")]))


def test_guard_standardization_unrecorded():
    with pytest.raises(LeakageError, match="without recorded"):
        check_fold(clean_audit(stats_rows=[()]))


class LeakyPlan(FoldPlan):
    """Training indices include the test fold."""

    def train_idx(self, f):
        return np.arange(self.fold.size)


def test_leaky_plan_caught_in_every_mode(table):
    good = make_fold_plan(table.rep_ids, 4, seed=1)
    leaky = LeakyPlan(good.k, good.fold, good.mode, good.seed, good.rep_ids)
    for mode in ("off", "estimated", "ground_truth"):
        with pytest.raises(LeakageError):
            run_rpe_experiment(table, RF, mode, leaky, 0, FAST)
    # without standardization the EMG read log alone still exposes the leak
    with pytest.raises(LeakageError, match="EMG values"):
        run_rpe_experiment(table, RF, "estimated", leaky, 0, dataclasses.replace(FAST, standardize=False))


def test_guards_off_lets_leak_through(table):
    good = make_fold_plan(table.rep_ids, 4, seed=1)
    leaky = LeakyPlan(good.k, good.fold, good.mode, good.seed, good.rep_ids)
    run_rpe_experiment(table, RF, "off", leaky, 0, dataclasses.replace(FAST, guards=False))


def test_smote_leak_into_estimators_is_caught(table, monkeypatch):
    real = pl.fit_emg_estimators

    def leaky(X, labels, opts=None, seed=0, row_ids=None):
        est = real(X, labels, opts, seed, row_ids)
        return dataclasses.replace(est, smote_ids=est.smote_ids + ("not-a-training-row",))

    monkeypatch.setattr(pl, "fit_emg_estimators", leaky)
    plan = make_fold_plan(table.rep_ids, 4, seed=2)
    with pytest.raises(LeakageError, match="SMOTE input"):
        run_rpe_experiment(table, RF, "estimated", plan, 0, FAST)


def test_stats_leak_is_caught(table, monkeypatch):
    real = StandardizationStats.fit.__func__

    def fit_on_everything(cls, X, row_ids=None):
        return dataclasses.replace(real(cls, X, row_ids), row_ids=tuple(table.rep_ids))

    monkeypatch.setattr(pl.StandardizationStats, "fit", classmethod(fit_on_everything))
    plan = make_fold_plan(table.rep_ids, 4, seed=2)
    with pytest.raises(LeakageError, match="standardization"):
        run_rpe_experiment(table, RF, "off", plan, 0, FAST)


def test_clean_estimated_run_reads_only_training_emg(table):
    plan = make_fold_plan(table.rep_ids, 4, seed=3)
    rep = run_rpe_experiment(table, RF, "estimated", plan, 0, FAST)
    for f, audit in enumerate(rep.notes["audits"]):
        test = {table.rep_ids[i] for i in plan.test_idx(f)}
        assert audit.emg_reads and not (audit.emg_reads & test)
        assert all(set(r) <= audit.train_ids for r in audit.stats_rows)
        assert set(audit.test_design_ids) == test
    assert len(rep.predictions) == len(table)


# ---------------------------------------------------------------- labels and estimators

def test_planted_clusters_recovered():
    X, E, c = planted()
    lab = build_emg_labels(E, seed=1, opts=FAST)
    assert lab.k == 4
    assert adjusted_rand_index(c, lab.cluster) >= 0.9
    assert np.var(lab.pc1, ddof=1) >= np.var(lab.pc2, ddof=1)


def test_cluster_classifier_on_planted_data():
    X, E, c = planted(seed=2)
    lab = build_emg_labels(E, seed=1, opts=FAST)
    est = fit_emg_estimators(X, lab, FAST, seed=0)
    Xt, Et, ct = planted(seed=2)  # same centers, fresh rows come from the same generator seed
    rng = np.random.default_rng(9)
    Xt[:, :4] = np.eye(4)[ct] * 3 + 0.3 * rng.standard_normal((ct.size, 4))
    # map planted ids to learned cluster ids via the training assignment
    mapping = {p: np.bincount(lab.cluster[c == p]).argmax() for p in range(4)}
    pred = np.asarray(est.cluster.predict(Xt))
    assert np.mean(pred == np.array([mapping[p] for p in ct])) >= 0.9


def test_augmentation_shapes_and_purity():
    X, E, c = planted(seed=0)
    lab = build_emg_labels(E, seed=1, opts=FAST)
    est = fit_emg_estimators(X, lab, FAST, seed=0)
    A = augment(X, est)
    assert A.shape[1] == 55 + 2 + lab.k == 61
    assert np.array_equal(A, augment(X, est))
    assert np.array_equal(augment(X, None), X)
    onehot = A[:, 57:]
    assert np.all(onehot.sum(axis=1) == 1)
    assert augmentation_names(4)[-1] == "est_cluster_3"
    assert any(r.startswith("smote:") for r in est.smote_ids) or len(set(np.bincount(lab.cluster))) == 1


# ---------------------------------------------------------------- experiment

def test_off_mode_equals_pipeline_without_augmentation(table):
    plan = make_fold_plan(table.rep_ids, 4, seed=4)
    rep = run_rpe_experiment(table, RF, "off", plan, 5, FAST)
    from repforge.config import derive_seed
    for f in range(4):
        tr, te = plan.train_idx(f), plan.test_idx(f)
        st = StandardizationStats.fit(table.X[tr])
        fold_seed = derive_seed(5, "fold", f)
        m = fit_model(RF, st.transform(table.X[tr]), table.rpe[tr], derive_seed(fold_seed, "rpe_model"))
        yhat = m.predict(st.transform(table.X[te]))
        assert [rep.predictions[table.rep_ids[i]][2] for i in te] == list(yhat)


def test_aggregate_is_mean_of_folds(table):
    plan = make_fold_plan(table.rep_ids, 4, seed=4)
    rep = run_rpe_experiment(table, ModelSpec.make("gbt", "regress", rounds=10), "ground_truth", plan, 1, FAST)
    for k in ("exact", "pm1", "rmse", "r2"):
        assert rep.aggregate[k] == pytest.approx(np.mean([f[k] for f in rep.per_fold]), abs=1e-12)
    assert set(EMG_FEATURE_NAMES) <= set(rep.importance)
    assert abs(sum(rep.importance.values()) - 1) < 1e-9


def test_deterministic(table):
    plan = make_fold_plan(table.rep_ids, 4, seed=4)
    a = run_rpe_experiment(table, RF, "estimated", plan, 2, FAST)
    b = run_rpe_experiment(table, RF, "estimated", plan, 2, FAST)
    assert a.predictions == b.predictions


def test_plan_mismatch_rejected(table):
    plan = make_fold_plan([f"x{i}" for i in range(len(table))], 4)
    with pytest.raises(PipelineError):
        run_rpe_experiment(table, RF, "off", plan)
    with pytest.raises(PipelineError):
        run_rpe_experiment(table, RF, "sideways", make_fold_plan(table.rep_ids, 4))


def test_model_spec_validation():
    with pytest.raises(PipelineError):
        ModelSpec.make("logistic", "regress")
    with pytest.raises(PipelineError):
        ModelSpec.make("svm", "classify")
    assert ModelSpec.make("rf", "classify", n_trees=5).digest() == ModelSpec.make("rf", "classify", n_trees=5).digest()
    assert ModelSpec.make("rf", "classify").name == "rf-classify"


def test_emg_store_logs():
    s = EmgStore(np.arange(6.0).reshape(3, 2), ["a", "b", "c"])
    assert s.read([2], "x").tolist() == [[4.0, 5.0]]
    assert s.read_ids() == {"c"}
    s.clear_log()
    assert s.read_ids() == set()


def test_table_from_rows(small_rows):
    t = RepTable.from_rows(small_rows)
    assert t.X.shape == (len(small_rows), len(IMU_FEATURE_NAMES))
    assert t.emg.shape == (len(small_rows), 9)
    assert np.array_equal(t.column("total_time"), [r["total_time"] for r in small_rows])
    no_emg = RepTable.from_rows([{k: v for k, v in r.items() if not k.startswith("emg_")} for r in small_rows])
    assert no_emg.emg is None


def test_options_from_config():
    o = PipelineOptions.from_config({"pipeline.perplexity": "12", "emg_estimator.rounds": "7",
                                     "pipeline.standardize": "false"})
    assert o.perplexity == 12 and dict(o.emg_estimator_params)["rounds"] == 7 and not o.standardize
