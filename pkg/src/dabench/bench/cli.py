"""Command line entry point.

Subcommands: ``bench run --config cfg.json``, ``bench table --records
records.jsonl``, ``bench scorer-analysis --records records.jsonl``, and
``bench datasets --list``.  Exit code is nonzero only for configuration
errors; per-trial failures are recorded in-band.
"""

from __future__ import annotations

import argparse
import sys

from .. import errors
from ..data import SHIFT_KINDS
from .config import load_config, read_records, write_records
from .methods import METHOD_REGISTRY
from .results import render_results, scorer_analysis_report
from .runner import run_nested_cv


def _cmd_run(args):
    config = load_config(args.config)
    if args.workers is not None:
        config.workers = args.workers
    if args.cache_dir is not None:
        config.cache_dir = args.cache_dir
    records, diag = run_nested_cv(config)
    out = args.output or config.records_path
    write_records(records, out)
    n_bad = sum(1 for r in records if not r.ok())
    print(f"wrote {len(records)} records to {out} "
          f"({diag['n_units']} units, {diag['n_fits']} fits, "
          f"{n_bad} failed/timed-out records)")
    return 0


def _cmd_table(args):
    records = read_records(args.records)
    text = render_results(records, fmt=args.format)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def _cmd_scorer_analysis(args):
    records = read_records(args.records)
    text = scorer_analysis_report(records, fmt=args.format)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def _cmd_datasets(args):
    if args.list:
        print("simulated shifts:")
        for kind in SHIFT_KINDS:
            print(f"  {kind}")
        print("csv: any file matching the documented schema "
              "(label column, domain column, float features)")
    return 0


def _cmd_methods(args):
    for mid, mdef in METHOD_REGISTRY.items():
        print(f"{mid:15s} {mdef.display:12s} [{mdef.family}]")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Domain adaptation benchmark with nested cross-validation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a benchmark config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--output", default=None, help="records JSONL path")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--cache-dir", default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_table = sub.add_parser("table", help="render the results table")
    p_table.add_argument("--records", required=True)
    p_table.add_argument("--format", choices=["markdown", "csv", "json"],
                         default="markdown")
    p_table.add_argument("--output", default=None)
    p_table.set_defaults(fn=_cmd_table)

    p_sc = sub.add_parser("scorer-analysis",
                          help="score-vs-accuracy correlation per scorer")
    p_sc.add_argument("--records", required=True)
    p_sc.add_argument("--format", choices=["markdown", "csv", "json"],
                      default="markdown")
    p_sc.add_argument("--output", default=None)
    p_sc.set_defaults(fn=_cmd_scorer_analysis)

    p_ds = sub.add_parser("datasets", help="dataset information")
    p_ds.add_argument("--list", action="store_true")
    p_ds.set_defaults(fn=_cmd_datasets)

    p_m = sub.add_parser("methods", help="list available methods")
    p_m.set_defaults(fn=_cmd_methods)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except errors.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
