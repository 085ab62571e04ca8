"""Command-line interface: train, predict, evaluate, posteriors, sample.

Flag values resolve as command line > environment (CRBM_ prefix) > built-in
defaults.  Every subcommand is deterministic under --seed.  Reporting paths
write matplotlib figures next to their delimited outputs unless --no-plot is
given.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data as data_io
from . import matrix as matrix_mod
from .errors import CrbmError
from .inference import (
    factor_posterior_mcmc,
    factor_posterior_meanfield,
    point_predictions,
    predict_mcmc,
    predict_variational,
)
from .learning import TrainConfig, train_vector, write_training_log
from .metrics import mae, rmse, write_metrics_report
from .serialize import load_model, save_matrix_model, save_vector_model
from .synth import sample_matrix_dataset, sample_vector_dataset


def _env(name, cast, fallback):
    raw = os.environ.get(f"CRBM_{name}")
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError:
        raise SystemExit(f"invalid value for CRBM_{name}: {raw!r}") from None


def _add_common_training_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=_env("EPOCHS", int, 30))
    p.add_argument("--lr", type=float, default=_env("LR", float, 0.01))
    p.add_argument("--chains", type=int, default=_env("CHAINS", int, 100),
                   help="free-phase persistent chains (fully observed data)")
    p.add_argument("--cd", type=int, default=_env("CD", int, 1),
                   help="Gibbs sweeps per update")
    p.add_argument("--eta", type=float, default=_env("ETA", float, 0.7),
                   help="posterior smoothing factor (matrix mode)")
    p.add_argument("--minibatch", type=int, default=_env("MINIBATCH", int, 100))
    p.add_argument("--patience", type=int, default=_env("PATIENCE", int, 3))
    p.add_argument("--init-std", type=float, default=_env("INIT_STD", float, 0.01))
    p.add_argument("--contrastive", action="store_true",
                   help="re-seed free chains from the clamped chains each update")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crbm",
        description="Cumulative RBM for ordinal vectors and matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model and write a training log")
    t.add_argument("--data", required=True)
    t.add_argument("--mode", choices=["vector", "matrix"], default="vector")
    t.add_argument("--k", type=int, required=True, help="instance factors")
    t.add_argument("--s", type=int, default=0, help="item factors (matrix mode)")
    t.add_argument("--out", required=True, help="model file to write")
    t.add_argument("--schema", default=None, help="survey sidecar schema (vector mode)")
    t.add_argument("--levels", type=int, default=None, help="rating scale 1..levels")
    _add_common_training_flags(t)
    t.add_argument("--seed", type=int, default=_env("SEED", int, 0))
    t.add_argument("--min-ratings", type=int, default=_env("MIN_RATINGS", int, 30))
    t.add_argument("--n-valid", type=int, default=_env("N_VALID", int, 5))
    t.add_argument("--n-test", type=int, default=_env("N_TEST", int, 10))
    t.add_argument("--by-time", action="store_true",
                   help="order the split by timestamps instead of at random")
    t.add_argument("--log", default=None, help="training log path (default <out>.train_log.tsv)")
    t.add_argument("--no-plot", action="store_true", help="skip the learning-curve figure")
    t.add_argument("--save-splits", default=None,
                   help="prefix for writing the train/valid/test partitions")
    t.add_argument("--threads", type=int, default=_env("THREADS", int, os.cpu_count() or 1))

    p = sub.add_parser("predict", help="emit level distributions for query pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--queries", required=True, help="delimited file with user/item columns")
    p.add_argument("--out", required=True)
    p.add_argument("--data", default=None, help="context observations (vector models)")
    p.add_argument("--mcmc", type=int, default=None,
                   help="use chain averaging with this many samples instead of mean-field")
    p.add_argument("--burn-in", type=int, default=50)
    p.add_argument("--seed", type=int, default=_env("SEED", int, 0))
    p.add_argument("--threads", type=int, default=_env("THREADS", int, os.cpu_count() or 1))

    e = sub.add_parser("evaluate", help="score predictions against a truth file")
    e.add_argument("--pred", required=True, help="output of the predict command")
    e.add_argument("--truth", required=True, help="ratings-format truth file")
    e.add_argument("--out", required=True, help="metrics report path")
    e.add_argument("--plot", default=None, help="error-profile figure (default <out>.png)")
    e.add_argument("--no-plot", action="store_true")

    o = sub.add_parser("posteriors", help="export per-instance factor posteriors")
    o.add_argument("--model", required=True)
    o.add_argument("--out", required=True)
    o.add_argument("--data", default=None, help="observations (required for vector models)")
    o.add_argument("--mcmc", type=int, default=None)
    o.add_argument("--burn-in", type=int, default=50)
    o.add_argument("--seed", type=int, default=_env("SEED", int, 0))
    o.add_argument("--threads", type=int, default=_env("THREADS", int, os.cpu_count() or 1))

    s = sub.add_parser("sample", help="draw a synthetic dataset from a model")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--instances", type=int, default=None,
                   help="instances to draw (vector models)")
    s.add_argument("--density", type=float, default=1.0)
    s.add_argument("--burn-in", type=int, default=50)
    s.add_argument("--seed", type=int, default=_env("SEED", int, 0))

    return parser


def _parallel_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _load_table(path, required):
    """Parse a delimited file with a header; return (column map, rows)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise CrbmError(f"{path} is empty")
        delim = "\t" if "\t" in header else ","
        names = [c.strip().lower() for c in header.rstrip("\n").split(delim)]
        cols = {n: i for i, n in enumerate(names)}
        for name in required:
            if name not in cols:
                raise CrbmError(f"{path}: missing required column {name!r}")
        rows = []
        for raw in fh:
            line = raw.rstrip("\n")
            if line.strip():
                rows.append(line.split(delim))
    return cols, rows


def _cmd_train(args) -> int:
    rng = np.random.default_rng(args.seed)
    survey = args.schema is not None
    if survey and args.mode == "matrix":
        raise CrbmError("survey data is heterogeneous; use --mode vector")

    if survey:
        full = data_io.load_survey(args.data, args.schema)
        train_set, valid_set = data_io.holdout_cells(full, args.n_valid, rng)
        test_set = None
    else:
        full = data_io.load_ratings(args.data, levels=args.levels)
        train_set, valid_set, test_set = data_io.split_protocol(
            full,
            min_ratings=args.min_ratings,
            n_valid=args.n_valid,
            n_test=args.n_test,
            by_time=args.by_time,
            rng=rng,
        )

    if train_set.n_entries == 0:
        raise CrbmError("no training cells survive the split")
    if args.save_splits:
        data_io.save_ratings(train_set, f"{args.save_splits}.train.tsv")
        data_io.save_ratings(valid_set, f"{args.save_splits}.valid.tsv")
        if test_set is not None:
            data_io.save_ratings(test_set, f"{args.save_splits}.test.tsv")

    config = TrainConfig(
        n_factors=args.k,
        n_item_factors=args.s,
        learning_rate=args.lr,
        epochs=args.epochs,
        minibatch=args.minibatch,
        cd_sweeps=args.cd,
        free_chains=args.chains,
        persistent=not args.contrastive,
        eta=args.eta,
        patience=args.patience,
        init_std=args.init_std,
        seed=args.seed,
    )

    # matrix mode with no item factors reduces exactly to the vector model
    if args.mode == "matrix" and args.s > 0:
        params, posteriors, records = matrix_mod.train_matrix(train_set, valid_set, config, rng)
        save_matrix_model(
            args.out,
            params,
            instance_labels=train_set.instance_labels,
            item_labels=train_set.item_labels,
            posteriors=posteriors,
        )
    else:
        params, records = train_vector(train_set, valid_set, config, rng)
        save_vector_model(args.out, params, item_labels=train_set.item_labels)

    log_path = args.log or f"{args.out}.train_log.tsv"
    write_training_log(log_path, records)
    if not args.no_plot:
        from .report import save_learning_curves

        save_learning_curves(records, f"{log_path}.png")

    last = records[-1]
    print(
        f"epochs={last.epoch} valid_pll={last.valid_pll:.6f} "
        f"valid_rmse={last.valid_rmse:.6f} valid_mae={last.valid_mae:.6f}"
    )
    return 0


def _context_by_user(model, obs):
    """Map a context observation set onto the model's item indexing."""
    item_idx = {label: i for i, label in enumerate(model.item_labels)}
    contexts = {}
    for pos in range(obs.n_entries):
        label = obs.instance_labels[obs.instances[pos]]
        model_item = item_idx.get(obs.item_labels[obs.items[pos]])
        if model_item is None:
            continue
        contexts.setdefault(label, []).append((model_item, int(obs.levels[pos])))
    return contexts


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    cols, rows = _load_table(args.queries, required=("user", "item"))
    queries = [(r[cols["user"]].strip(), r[cols["item"]].strip()) for r in rows]

    if model.kind == "vector":
        if args.data is None:
            raise CrbmError("vector models need --data for prediction context")
        obs = data_io.load_ratings(args.data)
        contexts = _context_by_user(model, obs)
        item_idx = {label: i for i, label in enumerate(model.item_labels)}
        params = model.params
        modal_levels = int(np.bincount([s.levels for s in params.scales]).argmax())
        master = np.random.default_rng(args.seed)
        child_rngs = master.spawn(len(queries))

        def one(task):
            qi, (user, item) = task
            pairs = contexts.get(user, [])
            target = item_idx.get(item)
            cold = user not in contexts or target is None
            if target is None:
                probs = np.full(modal_levels, 1.0 / modal_levels)
            else:
                kept = [(i, lv) for i, lv in pairs if i != target]
                items_ctx = np.array([i for i, _ in kept], dtype=int)
                levels_ctx = np.array([lv for _, lv in kept], dtype=int)
                if args.mcmc:
                    probs = predict_mcmc(
                        items_ctx, levels_ctx, params, target,
                        n_samples=args.mcmc, burn_in=args.burn_in, rng=child_rngs[qi],
                    )
                else:
                    probs = predict_variational(items_ctx, levels_ctx, params, target)
            return cold, probs

        results = _parallel_map(one, list(enumerate(queries)), args.threads)
    else:
        params = model.params
        posteriors = model.posteriors
        if posteriors is None:
            raise CrbmError("matrix model file carries no posterior tables")
        inst_idx = {label: d for d, label in enumerate(model.instance_labels)}
        item_idx = {label: i for i, label in enumerate(model.item_labels)}

        def one(task):
            _, (user, item) = task
            d = inst_idx.get(user)
            i = item_idx.get(item)
            probs = matrix_mod.predict_cell(params, posteriors, d, i)
            return (d is None or i is None), probs

        results = _parallel_map(one, list(enumerate(queries)), args.threads)

    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("user\titem\tcold\tmean\tmap\tprobs\n")
        for (user, item), (cold, probs) in zip(queries, results):
            mean, map_level = point_predictions(probs)
            probs_txt = "\t".join(f"{p:.6g}" for p in probs)
            fh.write(f"{user}\t{item}\t{int(cold)}\t{mean:.6f}\t{map_level}\t{probs_txt}\n")
    return 0


def _cmd_evaluate(args) -> int:
    pred_cols, pred_rows = _load_table(args.pred, required=("user", "item", "mean", "map"))
    truth_cols, truth_rows = _load_table(args.truth, required=("user", "item", "rating"))

    preds = {}
    for r in pred_rows:
        key = (r[pred_cols["user"]].strip(), r[pred_cols["item"]].strip())
        preds[key] = (float(r[pred_cols["mean"]]), float(r[pred_cols["map"]]))
    truths = {}
    for r in truth_rows:
        key = (r[truth_cols["user"]].strip(), r[truth_cols["item"]].strip())
        truths[key] = float(r[truth_cols["rating"]])

    if set(preds) != set(truths):
        missing = set(truths) - set(preds)
        extra = set(preds) - set(truths)
        raise CrbmError(
            f"prediction/truth keys mismatch: {len(missing)} missing, {len(extra)} extra"
        )

    keys = sorted(preds)
    mean_col = np.array([preds[k][0] for k in keys])
    map_col = np.array([preds[k][1] for k in keys])
    truth_col = np.array([truths[k] for k in keys])
    rmse_value = rmse(mean_col, truth_col)
    mae_value = mae(map_col, truth_col)
    write_metrics_report(
        args.out,
        [("rmse", rmse_value, len(keys)), ("mae", mae_value, len(keys))],
    )
    if not args.no_plot:
        from .report import save_error_profile

        plot_path = args.plot or f"{args.out}.png"
        save_error_profile(
            mean_col - truth_col, np.abs(map_col - truth_col), plot_path,
            rmse_value=rmse_value, mae_value=mae_value,
        )
    print(f"rmse={rmse_value:.6f} mae={mae_value:.6f} n={len(keys)}")
    return 0


def _cmd_posteriors(args) -> int:
    model = load_model(args.model)
    if model.kind == "matrix":
        if model.posteriors is None:
            raise CrbmError("matrix model file carries no posterior tables")
        labels = model.instance_labels
        table = model.posteriors.instance_probs
        rows = [(labels[d], table[d]) for d in range(len(labels))]
    else:
        if args.data is None:
            raise CrbmError("vector models need --data to infer posteriors")
        obs = data_io.load_ratings(args.data)
        contexts = _context_by_user(model, obs)
        params = model.params
        master = np.random.default_rng(args.seed)
        ordered = list(obs.instance_labels)
        child_rngs = master.spawn(len(ordered))

        def one(task):
            di, label = task
            pairs = contexts.get(label, [])
            items_ctx = np.array([i for i, _ in pairs], dtype=int)
            levels_ctx = np.array([lv for _, lv in pairs], dtype=int)
            if args.mcmc:
                return factor_posterior_mcmc(
                    items_ctx, levels_ctx, params,
                    n_samples=args.mcmc, burn_in=args.burn_in, rng=child_rngs[di],
                )
            return factor_posterior_meanfield(items_ctx, levels_ctx, params).factor_probs

        probs = _parallel_map(one, list(enumerate(ordered)), args.threads)
        rows = list(zip(ordered, probs))

    with open(args.out, "w", encoding="utf-8") as fh:
        k = len(rows[0][1]) if rows else 0
        fh.write("instance\t" + "\t".join(f"p{j + 1}" for j in range(k)) + "\n")
        for label, vec in rows:
            fh.write(label + "\t" + "\t".join(f"{v:.6g}" for v in vec) + "\n")
    return 0


def _cmd_sample(args) -> int:
    model = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    if model.kind == "vector":
        if args.instances is None or args.instances < 1:
            raise CrbmError("vector sampling needs --instances >= 1")
        obs = sample_vector_dataset(
            model.params, args.instances, rng, density=args.density, burn_in=args.burn_in
        )
        obs.item_labels = list(model.item_labels)
    else:
        obs = sample_matrix_dataset(
            model.params, rng, density=args.density, burn_in=args.burn_in
        )
        obs.item_labels = list(model.item_labels)
        obs.instance_labels = list(model.instance_labels)
    data_io.save_ratings(obs, args.out)
    print(f"wrote {obs.n_entries} cells over {obs.n_instances} instances")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "posteriors": _cmd_posteriors,
    "sample": _cmd_sample,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "mcmc", None) is not None and args.mcmc < 1:
        parser.error("--mcmc needs at least one sample")
    try:
        return _COMMANDS[args.command](args)
    except (CrbmError, OSError, ValueError) as exc:
        print(f"crbm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
