"""Command-line entry point tying the modules into reproduction workflows.

Exit codes: 0 success, 1 usage error, 2 data error. A --config file supplies
flat key=value defaults; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import sys

from .core import (
    FairrecError,
    Hyperparams,
    METRIC_FIELDS,
    _fmt,
    load_dataset,
    save_dataset,
)
from .harness import (
    DEFAULT_PENALTIES,
    ExperimentConfig,
    config_experiment,
    config_hyper,
    default_alpha,
    emit,
    parse_config_file,
    regime_comparison,
    run_experiment,
)
from .metrics import EvalSet, full_report
from .movielens import (
    DEFAULT_GENRE_MODE,
    GENRE_MODES,
    SELECTED_GENRES,
    canonical_genres,
    filter_dataset,
    parse_ml1m_dir,
)
from .penalties import parse_penalty
from .synthgen import REGIMES, RegimeConfig, default_block_models, generate, write_sidecar
from .trainer import load_model, save_model, save_trace, train


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this artifact reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


_BASE = Hyperparams()


def _add_hyper_flags(sub):
    sub.add_argument("--d", type=int, help=f"latent dimension (default {_BASE.d})")
    sub.add_argument("--lambda", dest="lam", type=float,
                     help=f"Frobenius regularization weight (default {_BASE.lam})")
    sub.add_argument("--alpha", type=float,
                     help=(f"penalty weight (default {default_alpha('synthetic')} "
                           f"synthetic, {default_alpha('movielens')} movielens)"))
    sub.add_argument("--lr", type=float,
                     help=f"Adam learning rate (default {_BASE.learning_rate})")
    sub.add_argument("--iterations", type=int,
                     help=f"training iterations (default {_BASE.iterations})")
    sub.add_argument("--init-scale", type=float,
                     help=f"stddev of the factor initialization (default {_BASE.init_scale})")
    sub.add_argument("--seed", type=int, help=f"base random seed (default {_BASE.seed})")


def _add_config_flag(sub):
    sub.add_argument("--config", help="key=value config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairrec",
                     description="Fairness-aware matrix factorization workflows.")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = subs.add_parser("synth-gen", help="generate a block-model dataset")
    gen.add_argument("--regime", choices=REGIMES, help="underrepresentation regime")
    gen.add_argument("--users", type=int, help="number of users (default 400)")
    gen.add_argument("--items", type=int, help="number of items (default 300)")
    gen.add_argument("--seed", type=int, help="generation seed (default 0)")
    gen.add_argument("--out", required=True, help="dataset file to write")
    gen.add_argument("--sidecar", help="block-model sidecar path (default OUT.blocks)")
    _add_config_flag(gen)
    gen.set_defaults(func=_cmd_synth_gen)

    mlp = subs.add_parser("ml-prepare", help="parse and filter MovieLens-1M")
    mlp.add_argument("--ml-path", help="directory with users.dat/movies.dat/ratings.dat")
    mlp.add_argument("--genres", help="comma-separated genre list")
    mlp.add_argument("--min-ratings", type=int, help="per-user rating floor (default 50)")
    mlp.add_argument("--mode", choices=GENRE_MODES, help="genre matching mode")
    mlp.add_argument("--out", help="write the filtered dataset here")
    _add_config_flag(mlp)
    mlp.set_defaults(func=_cmd_ml_prepare)

    tr = subs.add_parser("train", help="train one model on a dataset file")
    tr.add_argument("--data", required=True, help="dataset file to train on")
    tr.add_argument("--penalty", help='penalty spec, e.g. "value" or "under:0.5,over:0.5"')
    tr.add_argument("--smoothing", type=float, default=0.0,
                    help="epsilon for smoothed absolute values (default 0, exact)")
    _add_hyper_flags(tr)
    tr.add_argument("--out", required=True, help="checkpoint file to write")
    tr.add_argument("--trace", help="trace CSV path (default OUT.trace.csv)")
    _add_config_flag(tr)
    tr.set_defaults(func=_cmd_train)

    ev = subs.add_parser("eval", help="report metrics for a checkpoint on a dataset")
    ev.add_argument("--model", required=True, help="checkpoint file")
    ev.add_argument("--data", required=True, help="dataset file with the eval ratings")
    ev.add_argument("--error-metric", choices=("rmse", "mse"), default="rmse")
    ev.set_defaults(func=_cmd_eval)

    fig1 = subs.add_parser("reproduce-fig1",
                           help="regime comparison without penalties, bar-data CSV")
    fig1.add_argument("--users", type=int, help="number of users (default 400)")
    fig1.add_argument("--items", type=int, help="number of items (default 300)")
    fig1.add_argument("--trials", type=int, help="trials per regime (default 5)")
    _add_hyper_flags(fig1)
    fig1.add_argument("--out", required=True, help="CSV to write")
    _add_config_flag(fig1)
    fig1.set_defaults(func=_cmd_fig1)

    t1 = subs.add_parser("reproduce-table1",
                         help="penalty comparison on one synthetic regime")
    t1.add_argument("--regime", choices=REGIMES, help="regime (default P+O)")
    t1.add_argument("--users", type=int, help="number of users (default 400)")
    t1.add_argument("--items", type=int, help="number of items (default 300)")
    t1.add_argument("--trials", type=int, help="trials per penalty (default 5)")
    _add_hyper_flags(t1)
    t1.add_argument("--out", required=True, help="CSV to write")
    _add_config_flag(t1)
    t1.set_defaults(func=_cmd_table1)

    t2 = subs.add_parser("reproduce-table2",
                         help="penalty comparison on filtered MovieLens-1M")
    t2.add_argument("--ml-path", help="directory with the ML-1M files")
    t2.add_argument("--genres", help="comma-separated genre list")
    t2.add_argument("--min-ratings", type=int, help="per-user rating floor (default 50)")
    t2.add_argument("--mode", choices=GENRE_MODES, help="genre matching mode")
    t2.add_argument("--split", type=float, help="train fraction (default 0.8)")
    t2.add_argument("--trials", type=int, help="trials (default 3)")
    _add_hyper_flags(t2)
    t2.add_argument("--out", required=True, help="CSV to write")
    _add_config_flag(t2)
    t2.set_defaults(func=_cmd_table2)

    return parser


def _merged_mapping(args, keys) -> dict:
    """Config-file values overridden by whichever flags were actually given."""
    mapping = parse_config_file(args.config) if getattr(args, "config", None) else {}
    for key, attr in keys.items():
        value = getattr(args, attr, None)
        if value is not None:
            mapping[key] = str(value)
    return mapping


_HYPER_KEYS = {"d": "d", "lambda": "lam", "alpha": "alpha", "lr": "lr",
               "iterations": "iterations", "init_scale": "init_scale", "seed": "seed"}


def _write_text(path, text) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _cmd_synth_gen(args) -> int:
    mapping = _merged_mapping(args, {"regime": "regime", "users": "users",
                                     "items": "items", "seed": "seed"})
    config = RegimeConfig(
        regime=mapping.get("regime", "P+O"),
        num_users=int(mapping.get("users", 400)),
        num_items=int(mapping.get("items", 300)),
        seed=int(mapping.get("seed", 0)),
    )
    blocks = default_block_models()
    data, _ = generate(config, blocks)
    save_dataset(data, args.out)
    write_sidecar(args.sidecar or args.out + ".blocks", blocks, config.regime)
    print(f"users={data.num_users} items={data.num_items} ratings={data.num_ratings}")
    return 0


def _resolve_filter(mapping):
    genres = mapping.get("genres")
    return (canonical_genres(genres.split(",")) if genres else SELECTED_GENRES,
            int(mapping.get("min_ratings", 50)),
            mapping.get("genre_mode", DEFAULT_GENRE_MODE))


def _cmd_ml_prepare(args) -> int:
    mapping = _merged_mapping(args, {"ml_path": "ml_path", "genres": "genres",
                                     "min_ratings": "min_ratings", "genre_mode": "mode"})
    if not mapping.get("ml_path"):
        print("error: --ml-path is required (flag or config)", file=sys.stderr)
        return 1
    genres, min_ratings, mode = _resolve_filter(mapping)
    data = filter_dataset(parse_ml1m_dir(mapping["ml_path"]), genres, min_ratings, mode)
    print(f"users={data.num_users} movies={data.num_items}")
    print(f"ratings={data.num_ratings}")
    if args.out:
        save_dataset(data, args.out)
    return 0


def _cmd_train(args) -> int:
    mapping = _merged_mapping(args, dict(_HYPER_KEYS, penalty="penalty"))
    hyper = config_hyper(mapping, mapping.get("source", "synthetic"))
    spec = parse_penalty(mapping.get("penalty", "none"), args.smoothing)
    data = load_dataset(args.data)
    model, trace = train(data, hyper, spec)
    save_model(model, args.out)
    save_trace(trace, args.trace or args.out + ".trace.csv")
    print(f"final objective={_fmt(trace.objective[-1])} penalty={_fmt(trace.penalty[-1])}")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    data = load_dataset(args.data)
    report = full_report(model, EvalSet.from_dataset(data), data.protected,
                         error_metric=args.error_metric)
    for name in METRIC_FIELDS:
        print(f"{name}={_fmt(getattr(report, name))}")
    print(f"items_counted={report.items_counted}")
    return 0


def _experiment_mapping(args, extra=None) -> dict:
    keys = dict(_HYPER_KEYS, trials="trials")
    keys.update(extra or {})
    return _merged_mapping(args, keys)


def _cmd_fig1(args) -> int:
    mapping = _experiment_mapping(args, {"users": "users", "items": "items"})
    mapping["source"] = "synthetic"
    config = config_experiment(mapping)
    table = regime_comparison(config)
    _write_text(args.out, emit(table, "bar-data"))
    print(f"wrote {args.out}")
    return 0


def _cmd_table1(args) -> int:
    mapping = _experiment_mapping(args, {"users": "users", "items": "items",
                                         "regime": "regime"})
    mapping["source"] = "synthetic"
    config = config_experiment(mapping, penalties=DEFAULT_PENALTIES)
    table = run_experiment(config)
    _write_text(args.out, emit(table, "csv"))
    print(f"wrote {args.out}")
    return 0


def _cmd_table2(args) -> int:
    mapping = _experiment_mapping(args, {"ml_path": "ml_path", "genres": "genres",
                                         "min_ratings": "min_ratings",
                                         "genre_mode": "mode", "split": "split"})
    mapping["source"] = "movielens"
    if not mapping.get("ml_path"):
        print("error: --ml-path is required (flag or config)", file=sys.stderr)
        return 1
    config = config_experiment(mapping, penalties=DEFAULT_PENALTIES)
    table = run_experiment(config)
    _write_text(args.out, emit(table, "csv"))
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FairrecError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
