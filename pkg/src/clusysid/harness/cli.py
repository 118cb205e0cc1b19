"""Command line entry point.

    clusysid run --config paper_sec4 --seed 0 --out results/ [--mode pooled] [--iterations 100]
    clusysid plot --in results/ --out figures/
    clusysid check-config --config my.yaml

Exit codes: 0 success, 1 configuration error, 2 numerical degeneracy, 3 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from ..errors import ConfigurationError, DegeneracyError
from .config import MODES, load_config
from .experiment import run_experiment
from .plotting import HistoryFormatError, emit_plot_data

OUT_ENV = "CLUSYSID_OUT"
DEFAULT_OUT = "results"

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("clusysid")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clusysid", description="Clustered identification of LTI systems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="generate data, run one mode, write CSV history and summary")
    r.add_argument("--config", required=True, help="config file, or the name of a bundled config")
    r.add_argument("--seed", type=int, default=None, help="master seed (default: from config)")
    r.add_argument("--out", default=None, help=f"output directory (default: config, ${OUT_ENV}, or ./{DEFAULT_OUT})")
    r.add_argument("--mode", choices=MODES, default=None)
    r.add_argument("--iterations", type=int, default=None)
    r.add_argument("--seeds", type=int, default=None, help="seed count for sweep modes")

    pl = sub.add_parser("plot", help="emit plot tables and SVG charts from run histories")
    pl.add_argument("--in", dest="in_dir", required=True)
    pl.add_argument("--out", required=True)

    c = sub.add_parser("check-config", help="validate a config file")
    c.add_argument("--config", required=True)
    return p


def _cmd_run(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.iterations is not None:
        if args.iterations < 1:
            raise ConfigurationError(f"--iterations must be positive, got {args.iterations}")
        overrides["iterations"] = args.iterations
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigurationError(f"--seeds must be positive, got {args.seeds}")
        overrides["seeds"] = args.seeds
    if args.seed is not None and args.seed < 0:
        raise ConfigurationError(f"--seed must be non-negative, got {args.seed}")
    config = dataclasses.replace(config, **overrides)
    out = args.out or config.output or os.environ.get(OUT_ENV) or DEFAULT_OUT
    res = run_experiment(config, out, seed=args.seed)
    for f in res.files:
        print(f)
    return EXIT_OK


def _cmd_plot(args) -> int:
    for fig in emit_plot_data(args.in_dir, args.out):
        print(f"{fig.name}: {fig.table} {fig.chart} ({len(fig.series)} series)")
    return EXIT_OK


def _cmd_check(args) -> int:
    config = load_config(args.config)
    print(f"ok: {config.name} mode={config.mode} M={config.M} K={config.K} "
          f"members={config.member_counts} N={config.rollouts} T={config.horizon} R={config.iterations}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"run": _cmd_run, "plot": _cmd_plot, "check-config": _cmd_check}[args.command]
    try:
        return handler(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyError as exc:
        print(f"degenerate problem: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, HistoryFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
