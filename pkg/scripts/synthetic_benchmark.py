"""Compare the three EMG modes on a synthetic corpus.

    python3 scripts/synthetic_benchmark.py --sets 40 --seed 0

The synthetic generator ties EMG envelope amplitude and eccentric slowdown to
RPE, so both the IMU-only and the EMG-augmented models have something to find.
Prints one line per (model, mode) with exact and +-1 accuracy (or RMSE).
"""
import argparse
import time

from repforge.evaluation import make_fold_plan
from repforge.pipeline import ModelSpec, PipelineOptions, RepTable, extract_rows, run_rpe_experiment
from repforge.synth import generate_corpus

MODELS = ("rf:classify", "gbt:classify", "rf:regress", "elastic_net:regress")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sets", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--folds", type=int, default=4)
    ap.add_argument("--fold-mode", default="rep-shuffle", choices=["rep-shuffle", "by-set"])
    ap.add_argument("--tsne-iters", type=int, default=1000)
    ap.add_argument("--models", nargs="+", default=list(MODELS))
    args = ap.parse_args()

    corpus = generate_corpus(args.sets, seed=args.seed)
    rows, rejects = extract_rows([raw for raw, _ in corpus])
    table = RepTable.from_rows(rows)
    print(f"{args.sets} sets, {len(table)} reps, {len(rejects)} quarantined")
    plan = make_fold_plan(table.rep_ids, args.folds, args.fold_mode, seed=args.seed, set_ids=table.set_ids)
    opts = PipelineOptions(tsne_iters=args.tsne_iters)

    print(f"{'model':<22}{'mode':<14}{'exact':>8}{'pm1':>8}{'rmse':>8}{'sec':>7}")
    for text in args.models:
        family, task = text.split(":")
        spec = ModelSpec.make(family, task)
        for mode in ("off", "estimated", "ground_truth"):
            t0 = time.perf_counter()
            agg = run_rpe_experiment(table, spec, mode, plan, args.seed, opts).aggregate
            print(f"{text:<22}{mode:<14}{agg['exact']:8.3f}{agg['pm1']:8.3f}{agg.get('rmse', float('nan')):8.3f}"
                  f"{time.perf_counter() - t0:7.1f}")


if __name__ == "__main__":
    main()
