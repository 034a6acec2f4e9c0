"""Command-line surface: train, predict, evaluate, synth, stratify, sweep.

Exit codes: 0 success, 2 usage error, 1 runtime failure. All randomness
flows from --seed, so identical invocations produce byte-identical output
files.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import model as model_mod
from . import stratify as strat_mod
from .data import (
    LABEL_CLASS,
    LABEL_REAL,
    denormalize_labels,
    load_csv,
    minmax_normalize_labels,
    read_schema_file,
)
from .model import HyperParams, TASK_CLASSIFICATION, TASK_REGRESSION
from .synth import SynthConfig, write_medical_csv, write_subtyped_csv
from .tree import TreeConfig


class UsageError(Exception):
    pass


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("DPPRED_THREADS", "1")))


def _add_tree_flags(p):
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--min-bag", type=int, default=10)
    p.add_argument("--method", choices=["forward", "lasso"], default="forward")
    p.add_argument("--task", choices=[TASK_CLASSIFICATION, TASK_REGRESSION], default=None)
    p.add_argument("--no-normalize-labels", action="store_true",
                   help="keep regression labels on their original scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dppred",
        description="Train and serve concise threshold-rule models mined from random tree ensembles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from CSV data")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--trace", default=None, help="write the selection trace CSV here")
    _add_tree_flags(p)
    _add_common(p)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("evaluate", help="score a prediction file against labeled data")
    p.add_argument("--predictions", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    _add_common(p)

    p = sub.add_parser("synth", help="generate synthetic benchmark data")
    p.add_argument("--kind", choices=["medical", "subtyped"], default="medical")
    p.add_argument("--n-train", type=int, default=100_000)
    p.add_argument("--n-test", type=int, default=50_000)
    p.add_argument("--noise", type=float, default=0.001)
    p.add_argument("--groups", type=int, default=3)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--out-schema", required=True)
    _add_common(p)

    p = sub.add_parser("stratify-train", help="train the cluster-stratified model")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--global-patterns", type=int, default=30)
    p.add_argument("--local-patterns", type=int, default=10)
    p.add_argument("--groups", type=int, default=3)
    p.add_argument("--lda-alpha", type=float, default=None)
    p.add_argument("--lda-beta", type=float, default=0.1)
    p.add_argument("--gibbs-iterations", type=int, default=500)
    p.add_argument("--fold-in-iterations", type=int, default=50)
    _add_tree_flags(p)
    _add_common(p)

    p = sub.add_parser("stratify-predict", help="predict with a stratified model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("importance", help="per-variable rule frequency report")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("sweep", help="train across a parameter grid and report metrics")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--param", choices=["k", "trees"], required=True)
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=None)
    _add_tree_flags(p)
    _add_common(p)

    return parser


def _resolve_task(flag_task, label_task):
    inferred = TASK_CLASSIFICATION if label_task == LABEL_CLASS else TASK_REGRESSION
    if flag_task is not None and flag_task != inferred:
        raise UsageError(f"--task {flag_task} conflicts with the schema's {label_task!r} labels")
    return inferred


def _load_training_data(args):
    label_task, schema = read_schema_file(args.schema)
    task = _resolve_task(args.task, label_task)
    ds = load_csv(args.data, schema, label_task)
    if task == TASK_REGRESSION and not args.no_normalize_labels:
        ds = minmax_normalize_labels(ds)
    return ds, task


def _hyperparams(args, task, k=None):
    if args.trees < 1 or args.depth < 1 or getattr(args, "min_bag") < 1:
        raise UsageError("tree parameters must all be >= 1")
    if k is None:
        k = args.k if args.k is not None else (20 if task == TASK_CLASSIFICATION else 30)
    if k < 1:
        raise UsageError("--k must be >= 1")
    tree = TreeConfig(n_trees=args.trees, max_depth=args.depth,
                      min_bag=args.min_bag, seed=args.seed)
    return HyperParams(tree=tree, k=k, method=args.method, task=task)


def _train_metric(m, ds, task):
    preds = model_mod.predict(m, ds)
    if task == TASK_CLASSIFICATION:
        return "train accuracy", model_mod.evaluate(preds, ds.y, task)["accuracy"]
    truth = ds.y if ds.label_bounds is None else denormalize_labels(ds.y, ds.label_bounds)
    return "train RMSE", model_mod.evaluate(preds, truth, task)["rmse"]


def cmd_train(args) -> int:
    ds, task = _load_training_data(args)
    hp = _hyperparams(args, task)
    m = model_mod.train(ds, hp)
    model_mod.save(m, args.out)
    if args.trace and m.selection is not None:
        m.selection.write_trace_csv(args.trace)
    print(model_mod.render_model(m))
    name, value = _train_metric(m, ds, task)
    print(f"{name}: {value:.6f}")
    print(f"model written to {args.out}")
    return 0


def _write_predictions(path, preds, names=None, probs=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if probs is not None:
            writer.writerow(["row_index", "prediction", "probability"])
            for i, (p, pr) in enumerate(zip(preds, probs)):
                label = names[p] if names else str(p)
                writer.writerow([i, label, repr(float(pr))])
        else:
            writer.writerow(["row_index", "prediction"])
            for i, p in enumerate(preds):
                writer.writerow([i, repr(float(p))])


def cmd_predict(args) -> int:
    m = model_mod.load(args.model)
    ds = load_csv(args.data, m.schema, m.label_kind, allow_missing_labels=True)
    preds = model_mod.predict(m, ds)
    if m.task == TASK_CLASSIFICATION:
        proba = model_mod.predict_probabilities(m, ds)
        top = proba[np.arange(len(preds)), preds]
        _write_predictions(args.out, preds, names=m.label_names, probs=top)
    else:
        _write_predictions(args.out, preds)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    label_task, schema = read_schema_file(args.schema)
    ds = load_csv(args.data, schema, label_task)
    with open(args.predictions, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "row_index":
        raise ValueError(f"{args.predictions}: not a prediction file")
    pred_cells = [row[1] for row in rows[1:]]
    if len(pred_cells) != ds.n:
        raise ValueError(f"prediction count {len(pred_cells)} does not match data rows {ds.n}")

    if label_task == LABEL_CLASS:
        truth = [ds.label_names[int(v)] for v in ds.y]
        hits = sum(p == t for p, t in zip(pred_cells, truth))
        print(f"accuracy: {hits / ds.n:.6f}")
    else:
        preds = np.array([float(v) for v in pred_cells])
        res = model_mod.evaluate(preds, ds.y, TASK_REGRESSION)
        print(f"rmse: {res['rmse']:.6f}")
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(n_train=args.n_train, n_test=args.n_test,
                      noise_rate=args.noise, seed=args.seed)
    if args.kind == "medical":
        write_medical_csv(cfg, args.out_train, args.out_test, args.out_schema)
    else:
        if args.groups < 1:
            raise UsageError("--groups must be >= 1")
        write_subtyped_csv(cfg, args.groups, args.out_train, args.out_test, args.out_schema)
    print(f"wrote {args.out_train}, {args.out_test}, {args.out_schema}")
    return 0


def cmd_stratify_train(args) -> int:
    ds, task = _load_training_data(args)
    hp = _hyperparams(args, task, k=args.global_patterns)
    if args.global_patterns < 1 or args.local_patterns < 1 or args.groups < 1:
        raise UsageError("pattern counts and group count must be >= 1")
    cfg = strat_mod.StratifyConfig(
        n_global=args.global_patterns, n_local=args.local_patterns,
        n_clusters=args.groups, lda_alpha=args.lda_alpha, lda_beta=args.lda_beta,
        gibbs_iterations=args.gibbs_iterations,
        fold_in_iterations=args.fold_in_iterations, seed=args.seed)
    m = strat_mod.train_stratified(ds, hp, cfg)
    strat_mod.save_stratified(m, args.out)
    print(f"global rules: {len(m.global_patterns)}")
    for c, rules in enumerate(m.cluster_patterns):
        size = int((m.cluster_assignments == c).sum())
        print(f"cluster {c}: {size} instances, {len(rules)} local rules")
    preds = strat_mod.predict_stratified(m, ds)
    truth = ds.y if ds.label_bounds is None else denormalize_labels(ds.y, ds.label_bounds)
    if task == TASK_CLASSIFICATION:
        print(f"train accuracy: {model_mod.evaluate(preds, ds.y, task)['accuracy']:.6f}")
    else:
        print(f"train RMSE: {model_mod.evaluate(preds, truth, task)['rmse']:.6f}")
    print(f"model written to {args.out}")
    return 0


def cmd_stratify_predict(args) -> int:
    m = strat_mod.load_stratified(args.model)
    ds = load_csv(args.data, m.schema, m.label_kind, allow_missing_labels=True)
    preds = strat_mod.predict_stratified(m, ds)
    if m.task == TASK_CLASSIFICATION:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row_index", "prediction"])
            for i, p in enumerate(preds):
                writer.writerow([i, m.label_names[p] if m.label_names else str(p)])
    else:
        _write_predictions(args.out, preds)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_importance(args) -> int:
    m = strat_mod.load_stratified(args.model)
    strat_mod.write_importance_csv(m, args.out)
    print(f"wrote importance report to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values must list at least one integer")
    try:
        values = [int(v) for v in values]
    except ValueError:
        raise UsageError("--values must be comma-separated integers") from None

    label_task, schema = read_schema_file(args.schema)
    task = _resolve_task(args.task, label_task)
    train_ds = load_csv(args.data, schema, label_task)
    test_ds = load_csv(args.test, train_ds.schema, label_task)

    rows = []
    for v in values:
        if args.param == "k":
            hp = _hyperparams(args, task, k=v)
        else:
            if v < 1:
                raise UsageError("tree counts must be >= 1")
            hp = _hyperparams(args, task)
            hp = HyperParams(tree=TreeConfig(n_trees=v, max_depth=args.depth,
                                             min_bag=args.min_bag, seed=args.seed),
                             k=hp.k, method=args.method, task=task)
        m = model_mod.train(train_ds, hp)
        if task == TASK_CLASSIFICATION:
            train_metric = model_mod.evaluate(model_mod.predict(m, train_ds), train_ds.y, task)["accuracy"]
            test_metric = model_mod.evaluate(model_mod.predict(m, test_ds), test_ds.y, task)["accuracy"]
        else:
            train_metric = model_mod.evaluate(model_mod.predict(m, train_ds), train_ds.y, task)["rmse"]
            test_metric = model_mod.evaluate(model_mod.predict(m, test_ds), test_ds.y, task)["rmse"]
        rows.append((v, train_metric, test_metric))

    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "train_metric", "test_metric"])
        for v, tr, te in rows:
            writer.writerow([v, repr(float(tr)), repr(float(te))])
    print(f"wrote sweep results to {args.out}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "stratify-train": cmd_stratify_train,
    "stratify-predict": cmd_stratify_predict,
    "importance": cmd_importance,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
