"""Command-line entry point: ``repforge <command> --config FILE [options]``.

Stages and their files (all under ``--out``):

    synth     raw corpus: emg/, imu/, rpe.csv, truth.csv, columns.cfg
    ingest    ingest.csv         one row per loaded set
    segment   segments.csv       rep boundaries; rejects.csv for count mismatches
    features  reps.csv           ids, RPE, 55 IMU + 9 EMG features
    label     labels.csv         rep_id, pc1, pc2, tsne_km_cluster (whole corpus, for analysis)
    train     model_<name>_<mode>.json
    evaluate  eval_<mode>.csv, predictions_<mode>.csv, confusion_*.csv, importance_*.csv
    report    report.csv, impact.csv, importance_rank.csv, correlations.csv

Every CSV starts with ``# repforge config_hash=... seed=... stage=... inputs=...``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, config_hash, derive_seed
from .dataio import ColumnMap, DataError, PalmAxisConfig, load_corpus, read_meta, read_rep_dataset, write_rep_dataset
from .dsp import DspError, DspParams, align_set
from .embedding import EmbeddingError
from .evaluation import (METRIC_KEYS, EvaluationError, Range, emg_impact_table, make_fold_plan, pearson,
                         random_search)
from .features import EMG_FEATURE_NAMES, IMU_FEATURE_NAMES, SCHEMA_VERSION, FeatureError, rep_row
from .learners import LearnerError, load_model, save_model
from .pipeline import (LeakageError, ModelSpec, PipelineError, PipelineOptions, RepTable, augment,
                       augmentation_names, build_emg_labels, fit_emg_estimators, fit_model, model_importance,
                       run_rpe_experiment)
from .segmentation import CountMismatch, SegmentationError, SegmentParams, segment_set

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_QUARANTINE = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.kind, self.code = kind, code


# ---------------------------------------------------------------- context

class Run:
    def __init__(self, args):
        self.args = args
        path = Path(args.config)
        if not path.exists():
            raise CliError("missing_input", f"config file not found: {path}", EXIT_CONFIG)
        self.cfg = Config.from_file(path)
        self.base = path.parent
        if "data.columns" in self.cfg:
            cols = Config.from_file(self._path(self.cfg["data.columns"]))
            self.cfg = Config({**cols, **self.cfg})
        self.seed = int(args.seed if args.seed is not None else self.cfg.get_int("seed", 0))
        # --out is taken relative to the working directory, the config key relative to the config
        self.out = Path(args.out) if args.out else self._path(self.cfg.get_str("out", "out"))
        self.hash = config_hash(self.cfg)

    def _path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def data_root(self) -> Path:
        if "data.root" not in self.cfg:
            raise CliError("config", "missing key data.root", EXIT_CONFIG)
        return self._path(self.cfg["data.root"])

    def meta(self, stage: str, inputs: str = "") -> dict:
        m = {"config_hash": self.hash, "seed": self.seed, "stage": stage}
        if inputs:
            m["inputs"] = inputs
        return m

    def fresh(self, path: Path, stage: str, inputs: str) -> bool:
        if not self.args.skip_fresh or not path.exists():
            return False
        m = read_meta(path)
        return m.get("config_hash") == self.hash and m.get("seed") == str(self.seed) and m.get("inputs") == inputs

    def need(self, name: str) -> Path:
        p = self.out / name
        if not p.exists():
            raise CliError("missing_input", f"{p} not found; run the earlier stage first")
        return p

    def emg_mode(self) -> str:
        mode = self.args.emg_mode or self.cfg.get_str("experiment.emg_mode", "estimated")
        return mode.replace("-", "_")

    def columns(self) -> ColumnMap:
        cm = ColumnMap.from_config(self.cfg)
        if getattr(self.args, "palm_axis", None) is not None:
            cm.palm = PalmAxisConfig(self.args.palm_axis, cm.palm.sign)
        return cm

    def seg_params(self) -> SegmentParams:
        p = SegmentParams.from_config(self.cfg)
        if getattr(self.args, "min_gap_s", None) is not None:
            p = SegmentParams(self.args.min_gap_s, p.deadband, p.detect_cutoff_hz, p.refine_s)
        return p


def fingerprint(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        p = Path(p)
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for f in files:
            h.update(str(f.name).encode())
            h.update(f.read_bytes())
    return h.hexdigest()[:16]


def _write(path: Path, rows: list[dict], meta: dict, columns=None) -> None:
    write_rep_dataset(rows, path, meta, columns)


# ---------------------------------------------------------------- stages

def cmd_synth(run: Run) -> int:
    from .synth import CorpusSpec, SynthSpec, generate_corpus, write_corpus
    c = run.cfg
    n_sets = c.get_int("synth.n_sets", 69)
    noise = tuple(float(v) for v in c.get_str("synth.noise_levels_g", "0,0.003,0.006,0.01").split(","))
    base = SynthSpec(slowdown_s_per_rpe=c.get_float("synth.slowdown_s_per_rpe", 0.12),
                     break_mean_s=c.get_float("synth.break_mean_s", 0.25),
                     emg_rpe_gain=c.get_float("synth.emg_rpe_gain", 0.25))
    dist = CorpusSpec(mean_reps=c.get_float("synth.mean_reps", 14.5), reps_sd=c.get_float("synth.reps_sd", 4.0),
                      tempo_sd=c.get_float("synth.tempo_sd", 0.1),
                      duration_jitter=c.get_float("synth.duration_jitter", 0.04),
                      noise_levels_g=noise, base=base)
    root = run.out / "corpus" if "data.root" not in c else run.data_root()
    corpus = generate_corpus(n_sets, dist, derive_seed(run.seed, "synth"))
    cfg_path = write_corpus(corpus, root, run.columns())
    n_reps = sum(len(raw.rpe_annotations) for raw, _ in corpus)
    print(f"synth: {n_sets} sets, {n_reps} reps -> {root} (columns: {cfg_path.name})")
    return EXIT_OK


def _load(run: Run):
    root = run.data_root()
    if not root.exists():
        raise CliError("missing_input", f"data root {root} not found")
    return root, load_corpus(root, run.columns())


def cmd_ingest(run: Run) -> int:
    root, sets = _load(run)
    rows = []
    for raw in sets:
        rows.append({"set_id": str(raw.set_id), "n_emg": raw.emg.size, "n_imu": raw.accel.shape[0],
                     "n_annotations": len(raw.rpe_annotations),
                     "emg_rate_hz": float(1 / np.median(np.diff(raw.emg_t))),
                     "imu_rate_hz": float(1 / np.median(np.diff(raw.imu_t)))})
    _write(run.out / "ingest.csv", rows, run.meta("ingest", fingerprint(root)),
           ["set_id", "n_emg", "n_imu", "n_annotations", "emg_rate_hz", "imu_rate_hz"])
    print(f"ingest: {len(rows)} sets")
    return EXIT_OK


def _segment_all(run: Run, sets):
    dsp = DspParams.from_config(run.cfg)
    seg = run.seg_params()
    palm = run.columns().palm
    reps, rejects = [], []
    for raw in sets:
        aligned = align_set(raw, dsp)
        try:
            reps.extend(segment_set(aligned, palm, params=seg))
        except CountMismatch as exc:
            rejects.append(exc)
    return reps, rejects, palm


def _quarantine(run: Run, rejects, inputs: str) -> int:
    _write(run.out / "rejects.csv",
           [{"set_id": str(r.set_id), "detected": r.detected, "annotated": r.annotated} for r in rejects],
           run.meta("segment", inputs), ["set_id", "detected", "annotated"])
    if rejects:
        print(f"quarantined {len(rejects)} sets (see rejects.csv)", file=sys.stderr)
        if run.args.strict:
            raise CliError("quarantine", f"{len(rejects)} sets failed count validation", EXIT_QUARANTINE)
    return EXIT_OK


SEGMENT_COLUMNS = ["rep_id", "set_id", "ordinal", "start_idx", "mid_idx", "end_idx", "rpe"]


def cmd_segment(run: Run) -> int:
    inputs = fingerprint(run.data_root())
    if run.fresh(run.out / "segments.csv", "segment", inputs):
        print("segment: up to date")
        return EXIT_OK
    root, sets = _load(run)
    reps, rejects, _ = _segment_all(run, sets)
    rows = [{"rep_id": r.rep_id, "set_id": r.set_id, "ordinal": r.ordinal, "start_idx": r.start_idx,
             "mid_idx": r.mid_idx, "end_idx": r.end_idx, "rpe": r.rpe} for r in reps]
    _write(run.out / "segments.csv", rows, run.meta("segment", inputs), SEGMENT_COLUMNS)
    print(f"segment: {len(rows)} reps from {len(sets) - len(rejects)} sets, {len(rejects)} rejected")
    return _quarantine(run, rejects, inputs)


def cmd_features(run: Run) -> int:
    root = run.data_root()
    inputs = fingerprint(root)
    target = run.out / "reps.csv"
    if run.fresh(target, "features", inputs):
        print("features: up to date")
        return EXIT_OK
    _, sets = _load(run)
    reps, rejects, palm = _segment_all(run, sets)
    rows = [rep_row(r, palm) for r in reps]
    cols = ["rep_id", "set_id", "rpe", *IMU_FEATURE_NAMES, *EMG_FEATURE_NAMES]
    _write(target, rows, {**run.meta("features", inputs), "schema_version": SCHEMA_VERSION}, cols)
    print(f"features: {len(rows)} reps x {len(IMU_FEATURE_NAMES)} IMU + {len(EMG_FEATURE_NAMES)} EMG features")
    return _quarantine(run, rejects, inputs)


def _table(run: Run) -> tuple[RepTable, str]:
    path = run.need("reps.csv")
    meta = read_meta(path)
    if meta.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise CliError("schema", f"reps.csv has feature schema {meta.get('schema_version')}, "
                                 f"expected {SCHEMA_VERSION}")
    _, rows = read_rep_dataset(path)
    if not rows:
        raise CliError("empty", "reps.csv has no rows")
    return RepTable.from_rows(rows), fingerprint(path)


def cmd_label(run: Run) -> int:
    table, inputs = _table(run)
    if run.fresh(run.out / "labels.csv", "label", inputs):
        print("label: up to date")
        return EXIT_OK
    if table.emg is None:
        raise CliError("missing_input", "reps.csv has no EMG features")
    opts = PipelineOptions.from_config(run.cfg)
    E = table.emg.read(np.arange(len(table)), "corpus-level labels")
    labels = build_emg_labels(E, derive_seed(run.seed, "label"), table.rep_ids, opts)
    rows = [{"rep_id": r, "pc1": float(a), "pc2": float(b), "tsne_km_cluster": int(c)}
            for r, a, b, c in zip(table.rep_ids, labels.pc1, labels.pc2, labels.cluster)]
    _write(run.out / "labels.csv", rows, {**run.meta("label", inputs), "k": labels.k},
           ["rep_id", "pc1", "pc2", "tsne_km_cluster"])
    ev = labels.pca.explained_variance_ratio
    print(f"label: k={labels.k}; PC1/PC2 explain {ev[0]:.3f}/{ev[1]:.3f} of EMG feature variance")
    return EXIT_OK


def model_specs(cfg: Config) -> list[ModelSpec]:
    """``experiment.models = rf:classify, gbt:regress``; parameters under ``model.<family>.<key>``."""
    out = []
    for item in cfg.get_str("experiment.models", "rf:classify").split(","):
        item = item.strip()
        if not item:
            continue
        family, _, task = item.partition(":")
        params = {k.split(".", 2)[2]: _value(v) for k, v in cfg.items()
                  if k.startswith(f"model.{family}.") and k.count(".") >= 2}
        out.append(ModelSpec.make(family, task or "classify", **params))
    if not out:
        raise CliError("config", "experiment.models lists no models", EXIT_CONFIG)
    return out


def _value(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return None if v.lower() == "none" else v


def cmd_train(run: Run) -> int:
    table, inputs = _table(run)
    mode = run.emg_mode()
    opts = PipelineOptions.from_config(run.cfg)
    idx = np.arange(len(table))
    X, names = table.X.copy(), list(table.names)
    est = None
    if mode == "estimated":
        E = table.emg.read(idx, "train")
        labels = build_emg_labels(E, derive_seed(run.seed, "train", "labels"), table.rep_ids, opts)
        est = fit_emg_estimators(X, labels, opts, derive_seed(run.seed, "train", "estimators"), table.rep_ids)
        X = augment(X, est)
        names += list(augmentation_names(labels.k))
    elif mode == "ground_truth":
        X = np.column_stack([X, table.emg.read(idx, "train")])
        names += list(table.emg_names)
    for spec in model_specs(run.cfg):
        model = fit_model(spec, X, table.rpe, derive_seed(run.seed, "train", spec.name), tuple(names))
        path = run.out / f"model_{spec.name}_{mode}.json"
        save_model(model, path, {**run.meta("train", inputs), "emg_mode": mode, "spec": spec.digest(),
                                 "params": dict(spec.params)})
        print(f"train: {spec.name} ({mode}) -> {path.name}")
    if est is not None:
        for tag, m in (("pc1", est.pc1), ("pc2", est.pc2), ("cluster", est.cluster)):
            save_model(m, run.out / f"emg_estimator_{tag}.json", run.meta("train", inputs))
    return EXIT_OK


def _search_ranges(cfg: Config, family: str) -> dict:
    pre = f"search.{family}."
    return {k[len(pre):]: Range.parse(v) for k, v in cfg.items() if k.startswith(pre)}


def cmd_evaluate(run: Run) -> int:
    table, inputs = _table(run)
    mode = run.emg_mode()
    if run.fresh(run.out / f"eval_{mode}.csv", "evaluate", inputs):
        print(f"evaluate: eval_{mode}.csv up to date")
        return EXIT_OK
    opts = PipelineOptions.from_config(run.cfg)
    c = run.cfg
    plan = make_fold_plan(table.rep_ids, c.get_int("experiment.folds", 4),
                          c.get_str("experiment.fold_mode", "rep-shuffle"), derive_seed(run.seed, "folds"),
                          table.set_ids)
    budget = c.get_int("experiment.search_budget", 0)
    eval_rows, pred_rows, trial_rows = [], [], []
    for spec in model_specs(c):
        seed = derive_seed(run.seed, "evaluate", spec.name, mode)
        ranges = _search_ranges(c, spec.family)
        if budget > 0 and ranges:
            # search on an inner plan over the same reps; selection metric is ±1 accuracy
            inner = make_fold_plan(table.rep_ids, 3, plan.mode, derive_seed(seed, "search_plan"), table.set_ids)

            def objective(params, spec=spec):
                s = ModelSpec.make(spec.family, spec.task, **{**spec.kw, **params})
                return run_rpe_experiment(table, s, mode, inner, seed, opts).aggregate["pm1"]

            res = random_search(ranges, budget, objective, derive_seed(seed, "search"))
            for t, params, score in res.trials:
                trial_rows.append({"model": spec.name, "emg_mode": mode, "trial": t,
                                   "params": json.dumps(params, sort_keys=True), "pm1": score})
            spec = ModelSpec.make(spec.family, spec.task, **{**spec.kw, **res.best})
        report = run_rpe_experiment(table, spec, mode, plan, seed, opts)
        for row in report.rows():
            eval_rows.append({**row, "spec_hash": report.spec_hash,
                              "ci_low": report.ci["pm1_normal"][0], "ci_high": report.ci["pm1_normal"][1],
                              "boot_low": report.ci["pm1_bootstrap"][0], "boot_high": report.ci["pm1_bootstrap"][1]})
        for rid, (f, y, yhat) in report.predictions.items():
            pred_rows.append({"rep_id": rid, "model": spec.name, "emg_mode": mode, "fold": f,
                              "rpe": int(y), "estimate": float(yhat)})
        C = report.pooled["confusion"]
        _write(run.out / f"confusion_{spec.name}_{mode}.csv",
               [{"true_rpe": i + 1, **{f"pred_{j + 1}": int(C[i, j]) for j in range(10)}} for i in range(10)],
               run.meta("evaluate", inputs))
        if report.importance:
            imp = sorted(report.importance.items(), key=lambda kv: (-kv[1], kv[0]))
            _write(run.out / f"importance_{spec.name}_{mode}.csv",
                   [{"rank": i + 1, "feature": n, "importance": v} for i, (n, v) in enumerate(imp)],
                   run.meta("evaluate", inputs))
        a = report.aggregate
        print(f"evaluate: {spec.name} emg={mode} exact={a['exact']:.4f} pm1={a['pm1']:.4f} "
              f"f1_macro={a['f1_macro']:.4f} rmse={a['rmse']:.4f}")
    _write(run.out / f"eval_{mode}.csv", eval_rows, run.meta("evaluate", inputs))
    _write(run.out / f"predictions_{mode}.csv", pred_rows, run.meta("evaluate", inputs))
    if trial_rows:
        _write(run.out / f"search_{mode}.csv", trial_rows, run.meta("evaluate", inputs))
    return EXIT_OK


def _read_eval(path: Path) -> list[dict]:
    _, rows = read_rep_dataset(path)
    return rows


def cmd_report(run: Run) -> int:
    evals = sorted(run.out.glob("eval_*.csv"))
    if not evals:
        raise CliError("missing_input", f"no eval_*.csv in {run.out}; run evaluate first")
    inputs = fingerprint(*evals)
    meta = run.meta("report", inputs)
    rows = [r for p in evals for r in _read_eval(p)]
    for r in rows:  # fold indices come back from CSV as floats
        if isinstance(r["fold"], float):
            r["fold"] = str(int(r["fold"]))
    cols = ["model", "task", "emg_mode", "fold", *METRIC_KEYS, "ci_low", "ci_high", "boot_low", "boot_high"]
    _write(run.out / "report.csv", [{k: r[k] for k in cols} for r in rows], meta, cols)

    agg = {(r["model"], r["task"], r["emg_mode"]): r for r in rows if r["fold"] == "mean"}
    with_modes = {m for (_, _, m) in agg if m != "off"}
    impact_rows = []
    for mode in sorted(with_modes):
        keys = sorted({(m, t) for (m, t, e) in agg if e == mode} & {(m, t) for (m, t, e) in agg if e == "off"})
        if not keys:
            continue
        table = emg_impact_table([{"model": m, "task": t, **agg[(m, t, mode)]} for m, t in keys],
                                 [{"model": m, "task": t, **agg[(m, t, "off")]} for m, t in keys])
        impact_rows += [{"emg_mode": mode, "metric": r.metric, "mean": r.mean, "median": r.median,
                         "std": r.std, "max": r.max, "min": r.min, "pairs": len(keys)} for r in table]
    _write(run.out / "impact.csv", impact_rows, meta,
           ["emg_mode", "metric", "mean", "median", "std", "max", "min", "pairs"])

    ranks = []
    for p in sorted(run.out.glob("importance_*.csv")):
        _, imp = read_rep_dataset(p)
        tag = p.stem[len("importance_"):]
        ranks += [{"source": tag, **r} for r in imp]
    _write(run.out / "importance_rank.csv", ranks, meta, ["source", "rank", "feature", "importance"])

    corr = _correlations(run)
    _write(run.out / "correlations.csv", corr, meta, ["x", "y", "n", "pearson"])
    print(f"report: {len(agg)} aggregate rows, {len(impact_rows)} impact rows, {len(corr)} correlations")
    return EXIT_OK


def _correlations(run: Run) -> list[dict]:
    path = run.out / "reps.csv"
    if not path.exists():
        return []
    table = RepTable.from_rows(read_rep_dataset(path)[1])
    out = []

    def add(xn, yn, x, y):
        try:
            out.append({"x": xn, "y": yn, "n": len(x), "pearson": pearson(x, y)})
        except EvaluationError:
            pass

    add("total_time", "rpe", table.column("total_time"), table.rpe)
    add("eccentric_time", "rpe", table.column("eccentric_time"), table.rpe)
    lab = run.out / "labels.csv"
    if lab.exists():
        lrows = {r["rep_id"]: r for r in read_rep_dataset(lab)[1]}
        if all(r in lrows for r in table.rep_ids):
            pc1 = np.array([lrows[r]["pc1"] for r in table.rep_ids])
            add("emg_pc1", "rpe", pc1, table.rpe)
            from .embedding import pca_fit
            imu_pc1 = pca_fit(table.X, 1, standardize=True).transform(table.X)[:, 0]
            add("imu_pc1", "emg_pc1", imu_pc1, pc1)
    return out


def cmd_model_inspect(args) -> int:
    model, meta = load_model(args.path)
    print(f"model: {type(model).__name__} task={getattr(model, 'task', 'regress')} "
          f"features={model.n_features}")
    for k, v in sorted(meta.items()):
        print(f"  {k}: {v}")
    imp = model_importance(model)
    if imp is not None:
        names = model.feature_names or tuple(f"f{i}" for i in range(model.n_features))
        order = np.argsort(-imp, kind="stable")
        print("rank  importance  feature")
        for r, i in enumerate(order[: args.top]):
            print(f"{r + 1:4d}  {imp[i]:10.6f}  {names[i]}")
    elif hasattr(model, "weights"):
        print(f"  regularization: {model.reg}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "segment": cmd_segment, "features": cmd_features,
            "label": cmd_label, "train": cmd_train, "evaluate": cmd_evaluate, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repforge", description="RPE estimation from IMU/EMG bicep-curl recordings")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--strict", action="store_true", help="exit nonzero when sets are quarantined")
        s.add_argument("--emg-mode", choices=["off", "estimated", "ground-truth"])
        s.add_argument("--skip-fresh", action="store_true", help="skip stages whose outputs are up to date")
        if name in ("segment", "features"):
            s.add_argument("--min-gap-s", type=float)
            s.add_argument("--palm-axis", type=int, choices=[0, 1, 2])
    m = sub.add_parser("model")
    msub = m.add_subparsers(dest="model_command", required=True)
    ins = msub.add_parser("inspect")
    ins.add_argument("path")
    ins.add_argument("--top", type=int, default=20)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "model":
            return cmd_model_inspect(args)
        run = Run(args)
        run.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](run)
    except CliError as exc:
        kind, code, msg = exc.kind, exc.code, str(exc)
    except (ConfigError,) as exc:
        kind, code, msg = "config", EXIT_CONFIG, str(exc)
    except LeakageError as exc:
        kind, code, msg = "leakage", EXIT_RUNTIME, str(exc)
    except (DataError, DspError, SegmentationError, FeatureError, EmbeddingError, LearnerError,
            PipelineError, EvaluationError, FileNotFoundError) as exc:
        kind, code, msg = type(exc).__name__, EXIT_RUNTIME, str(exc)
    print(json.dumps({"error": kind, "message": msg, "exit": code}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
