"""Command-line experiment runner.

Subcommands:

* ``run <config-file>``    -- run all replications, write learning-curve CSVs
* ``preset <name> --out d`` -- write the config files of a named experiment matrix
* ``aggregate <dir>``      -- merge per-replication CSVs into aggregate CSVs
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import harness
from .backend import backend_name


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwaopt",
        description="Stochastic policy-improvement experiments on the viapoint task",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config", type=Path, help="experiment config file")
    run_p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    run_p.add_argument("--seed", type=int, default=None, help="override the base seed")
    run_p.add_argument(
        "--replications", type=int, default=None, help="override the replication count"
    )

    preset_p = sub.add_parser("preset", help="write a named experiment matrix")
    preset_p.add_argument("name", help="preset name: fig3, fig5 or fig6")
    preset_p.add_argument("--out", type=Path, required=True, help="output directory")

    agg_p = sub.add_parser("aggregate", help="aggregate per-replication CSVs")
    agg_p.add_argument("directory", type=Path, help="directory with <stem>.rep<r>.csv files")
    return parser


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replications is not None:
        overrides["replications"] = args.replications
    if overrides:
        config = dataclasses.replace(config, **overrides)
    args.out.mkdir(parents=True, exist_ok=True)
    stem = args.config.stem
    print(f"running {stem}: {config.algorithm}, {config.replications} replication(s), "
          f"{config.updates} update(s) [{backend_name()} kernels]")
    curves, failures = harness.run(config, out_dir=args.out, stem=stem)
    for rep, curve in enumerate(curves):
        path = args.out / f"{stem}.rep{rep}.csv"
        if rep in failures:
            print(f"  rep {rep}: ABORTED ({failures[rep]}) -> {path}", file=sys.stderr)
        else:
            final = curve.rows[-1].noise_free_cost
            print(f"  rep {rep}: final noise-free cost {final:.6g} -> {path}")
    return 1 if failures else 0


def _cmd_preset(args) -> int:
    configs = harness.preset(args.name)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, config in configs:
        path = args.out / f"{name}.conf"
        harness.write_config(config, path)
        print(f"wrote {path}")
    return 0


def _cmd_aggregate(args) -> int:
    written = harness.aggregate_directory(args.directory)
    if not written:
        print(f"no <stem>.rep<r>.csv files found in {args.directory}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "preset":
            return _cmd_preset(args)
        return _cmd_aggregate(args)
    except harness.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
