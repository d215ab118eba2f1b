"""Command-line entry point: ``skinlab <verb> [options]``.

Grid flags take several values and ``start:stop:step`` ranges (stop
inclusive), e.g. ``--L 10:60:10 --alpha 0 2 inf``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from skinlab import __version__
from skinlab.sweeps import (
    PRESETS,
    TASKS,
    ConfigError,
    SweepConfig,
    emit,
    figure_preset,
    parse_config,
    records_to_csv,
    records_to_json,
    run_sweep,
)


def _expand(values: Sequence[str], kind=float) -> list:
    out = []
    for v in values:
        if ":" in v:
            parts = [float(x) for x in v.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise argparse.ArgumentTypeError(f"bad range {v!r}; use start:stop:step")
            start, stop, step = parts
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            out += [kind(start + k * step) for k in range(n)]
        else:
            out.append(kind(float(v)) if kind is int else kind(v))
    return out


def _complex(v: str) -> complex:
    return complex(v.replace("i", "j"))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")
    p.add_argument("--timeout", type=float, help="per-point timeout in seconds (default 300)")
    p.add_argument("--timing", action="store_true", help="include wall times in JSON output")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_grid(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file; flags override it")
    p.add_argument("--g", nargs="+", help="nonreciprocity g, J_L=e^g, J_R=e^-g")
    p.add_argument("--JL", nargs="+", type=_complex, help="explicit J_L values (paired with --JR)")
    p.add_argument("--JR", nargs="+", type=_complex, help="explicit J_R values")
    p.add_argument("--alpha", nargs="+", help="decay exponents; 'inf' for nearest-neighbour")
    p.add_argument("--L", nargs="+", help="system sizes or scan window")
    p.add_argument("--alpha-over-g", nargs="+", help="add points with g = alpha / ratio")
    p.add_argument("--mode-fraction", nargs="+", help="follow modes across the L window")
    p.add_argument("--reality-tol", type=float)
    p.add_argument("--threshold", type=float, help="complex-fraction threshold for L_c")
    p.add_argument("--trim", type=float, help="fraction of sites dropped at each end in fits")
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--checkpoints", type=int)
    p.add_argument("--n-samples", type=int, help="steady-ensemble samples")
    p.add_argument("--cuts", choices=("all", "half"))
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skinlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"skinlab {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    for task in TASKS:
        p = sub.add_parser(task, help=f"{task} sweep")
        _add_grid(p)
        _add_common(p)
    p = sub.add_parser("figure", help="regenerate the data behind a figure preset")
    p.add_argument("preset", choices=PRESETS)
    p.add_argument("--show-config", action="store_true", help="print the preset config and exit")
    _add_common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> SweepConfig:
    if args.verb == "figure":
        cfg = figure_preset(args.preset)
    elif args.config is not None:
        cfg = parse_config(args.config.read_text())
        if cfg.task != args.verb:
            raise ConfigError(f"config task {cfg.task!r} does not match verb {args.verb!r}")
    else:
        cfg = SweepConfig(args.verb)
    upd = {}
    if args.verb != "figure":
        grids = {"g": (args.g, float), "alpha": (args.alpha, float), "L": (args.L, int),
                 "alpha_over_g": (args.alpha_over_g, float),
                 "mode_fraction": (args.mode_fraction, float)}
        for key, (vals, kind) in grids.items():
            if vals:
                upd[key] = _expand(vals, kind)
        if args.JL or args.JR:
            upd["J_L"], upd["J_R"] = list(args.JL or []), list(args.JR or [])
        for key in ("reality_tol", "threshold", "trim", "dt", "steps", "checkpoints",
                    "n_samples", "cuts", "seed"):
            if getattr(args, key) is not None:
                upd[key] = getattr(args, key)
    for key in ("output", "format", "workers", "timeout"):
        if getattr(args, key) is not None:
            upd[key] = getattr(args, key)
    return replace(cfg, **upd).validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"skinlab: error: {exc}", file=sys.stderr)
        return 2
    if getattr(args, "show_config", False):
        from skinlab.sweeps import config_to_text

        sys.stdout.write(config_to_text(cfg))
        return 0
    records = run_sweep(cfg)
    try:
        if cfg.output:
            emit(records, cfg.format, cfg.output, task=cfg.task, include_timing=args.timing)
        elif cfg.format == "csv":
            sys.stdout.write(records_to_csv(records, cfg.task))
        else:
            sys.stdout.write(records_to_json(records, args.timing))
    except ConfigError as exc:
        print(f"skinlab: error: {exc}", file=sys.stderr)
        return 2
    failed = [r for r in records if r.status != "ok"]
    for r in failed:
        print(f"skinlab: point {r.point} failed: {r.error}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
