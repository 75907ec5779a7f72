"""Command-line experiment runner.

    ssblab run <config.yaml> [--out-dir DIR]
    ssblab sweep <config.yaml> --axis params.eta --values 0.1,0.5,0.9 [--workers N]
    ssblab list [--format json]

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

import yaml

from .config import ConfigError, load_config
from .experiments import list_experiments, run_experiment, run_sweep


def _parse_values(raw: str) -> list:
    return [yaml.safe_load(item) for item in raw.split(",") if item.strip() != ""]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ssblab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="YAML config file")
    p_run.add_argument("--out-dir", default=None, help="override the output directory")

    p_sweep = sub.add_parser("sweep", help="run a config once per axis value")
    p_sweep.add_argument("config", help="YAML config file")
    p_sweep.add_argument("--axis", required=True, help="parameter to vary, e.g. params.eta")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--workers", type=int, default=1, help="concurrent points")
    p_sweep.add_argument("--out-dir", default=None, help="override the output directory")

    p_list = sub.add_parser("list", help="list available experiments")
    p_list.add_argument("--format", choices=("table", "json"), default="table")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = load_config(args.config)
            summary = run_experiment(config, out_dir_override=args.out_dir)
            for key in sorted(summary):
                print(f"{key}: {summary[key]}")
            return 0
        if args.command == "sweep":
            config = load_config(args.config)
            values = _parse_values(args.values)
            rows, any_failed = run_sweep(
                config, args.axis, values,
                out_dir_override=args.out_dir, workers=args.workers,
            )
            for row in rows:
                print(f"point {row['index']}: {row['status']}")
            return 1 if any_failed else 0
        if args.command == "list":
            table = list_experiments()
            if args.format == "json":
                print(json.dumps(table, indent=2))
            else:
                width = max(len(t["name"]) for t in table)
                for t in table:
                    print(f"{t['name']:<{width}}  {t['description']}")
                    print(f"{'':<{width}}  validates: {t['validates']}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
