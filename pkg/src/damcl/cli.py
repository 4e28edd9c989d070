"""Command-line interface: fetch-data, run, sweep, report.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import results
from .config import (
    DATA_DIR_ENV,
    ConfigError,
    ExperimentConfig,
    apply_net_preset,
    apply_overrides,
    load_config,
)
from .datasets import DataError, fetch_mnist
from .experiment import SweepAxis, run_experiment, sweep
from .network import NumericError


def _default_data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV, "data")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.net_preset:
        cfg = apply_net_preset(cfg, args.net_preset)
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    if args.output_dir:
        cfg = apply_overrides(cfg, [f"run.output_dir={args.output_dir}"])
    return cfg


def _add_config_args(parser):
    parser.add_argument("config", nargs="?", help="flat key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field (repeatable)")
    parser.add_argument("--net-preset", choices=["full", "full-alt", "desk"],
                        help="apply a named network preset before overrides")
    parser.add_argument("--output-dir", help="where to write result files")


def cmd_fetch_data(args) -> int:
    for line in fetch_mnist(args.data_dir, base_url=args.base_url, verify_only=args.verify_only):
        print(line)
    return 0


def _run_stem(cfg: ExperimentConfig) -> str:
    hyper = cfg.method.hyperparameter()
    tag = "" if hyper is None else f"_h{hyper:g}"
    return f"run_{cfg.method.name}_n{cfg.net.interaction_vertex:g}{tag}_seed{cfg.trial_seed}"


def cmd_run(args) -> int:
    cfg = _load(args)
    record = run_experiment(cfg)
    out = Path(cfg.output_dir)
    stem = _run_stem(cfg)
    results.write_run_record(record, out / f"{stem}.jsonl", out / f"{stem}.csv")
    print(f"wrote {out / (stem + '.jsonl')}")
    for task_id, score in enumerate(record.final_scores):
        print(f"task {task_id}: final F1 {score:.3f}")
    print(f"average accuracy: {record.final_avg_accuracy:.3f}")
    return 0


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}") from exc


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if args.grid:
        try:
            values = [float(v) for v in args.grid.split(",") if v.strip() != ""]
        except ValueError as exc:
            raise ConfigError(f"bad grid {args.grid!r}") from exc
        axis = SweepAxis(args.axis, values=values)
    elif args.log_uniform:
        lo, hi, trials = args.log_uniform
        axis = SweepAxis(args.axis, log_low=float(lo), log_high=float(hi), trials=int(trials))
    else:
        raise ConfigError("sweep needs --grid or --log-uniform")
    seeds = _parse_seeds(args.seeds)
    result = sweep(cfg, axis, seeds,
                   progress=lambda t: print(f"value {t.value:g} seed {t.seed}: "
                                            f"avg acc {t.avg_accuracy:.3f}"))
    out = Path(cfg.output_dir)
    field_tag = args.axis.split(".", 1)[1]
    trials_path = out / f"sweep_{cfg.method.name}_{field_tag}_trials.csv"
    window_path = out / f"sweep_{cfg.method.name}_{field_tag}_window.csv"
    results.write_sweep_result(result, trials_path, window_path)
    print(f"wrote {trials_path} and {window_path}")
    return 0


def cmd_report(args) -> int:
    paths = []
    for entry in args.paths:
        p = Path(entry)
        if p.is_dir():
            paths.extend(sorted(p.glob("run_*.csv")))
        else:
            paths.append(p)
    rows = []
    for p in paths:
        try:
            rows.extend(results.read_summary_csv(p))
        except Exception as exc:
            raise DataError(f"cannot read summary {p}: {exc}") from exc
    if not rows:
        raise DataError("no run summaries found")
    table = results.aggregate_summaries(rows)
    print(results.format_aggregate_table(table))
    if args.out:
        results.write_aggregate_csv(table, args.out)
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="damcl",
        description="Dense associative memory sequential-learning harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fetch = sub.add_parser("fetch-data", help="download and checksum the digit files")
    fetch.add_argument("--data-dir", default=_default_data_dir())
    fetch.add_argument("--base-url", default=None)
    fetch.add_argument("--verify-only", action="store_true")
    fetch.set_defaults(func=cmd_fetch_data)

    run = sub.add_parser("run", help="run one experiment from a config file")
    _add_config_args(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="sweep one hyperparameter axis")
    _add_config_args(sw)
    sw.add_argument("--axis", required=True,
                    choices=["method.proportion", "method.reg_strength"])
    sw.add_argument("--grid", help="comma-separated values")
    sw.add_argument("--log-uniform", nargs=3, metavar=("LOW", "HIGH", "TRIALS"),
                    help="sample TRIALS values log-uniformly in [LOW, HIGH]")
    sw.add_argument("--seeds", default="1", help="comma-separated trial seeds")
    sw.set_defaults(func=cmd_sweep)

    rep = sub.add_parser("report", help="aggregate run summaries into a table")
    rep.add_argument("paths", nargs="+", help="summary CSV files or directories")
    rep.add_argument("--out", help="also write the aggregate as CSV")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "fetch-data" and args.base_url is None:
        from .datasets import MNIST_BASE_URL

        args.base_url = MNIST_BASE_URL
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
