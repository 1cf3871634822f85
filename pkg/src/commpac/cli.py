"""Command-line entry point: run, weights, bounds, sweep."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .experiment import (
    SURFACE_HEADER,
    emit_csv,
    metrics_csv_text,
    pac_report_for,
    run_experiment,
    weight_surface,
)
from .protocol import SCHEMES

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def _common(p: argparse.ArgumentParser, multi_config: bool = False):
    if multi_config:
        p.add_argument("--config", action="append", default=[], help="INI config (repeatable)")
        p.add_argument("--scheme", action="append", choices=SCHEMES, help="scheme (repeatable)")
    else:
        p.add_argument("--config", help="INI config file")
        p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--sigma-l2", type=float, help="learner->agent noise variance")
    p.add_argument("--sigma-a2", type=float, help="agent->agent noise variance")
    p.add_argument("--delta-q", type=float, help="quantization bound on every Q link")
    p.add_argument("--replications", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="commpac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write the metrics CSV")
    _common(run)
    run.add_argument("--out", default="-", help="CSV path, '-' for stdout")

    weights = sub.add_parser("weights", help="optimal-weight surface table")
    weights.add_argument("--ratio-a1", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0, 4.0])
    weights.add_argument("--ratio-a2", type=float, nargs="+", default=[0.0, 0.5, 1.0, 2.0, 4.0])
    weights.add_argument("--n-a", type=int, nargs="+", default=[1])
    weights.add_argument("--sigma-l2", type=float, default=1.0)
    weights.add_argument("--out", default="-")

    bounds = sub.add_parser("bounds", help="print the PAC report for a config")
    _common(bounds)
    bounds.add_argument("--out", default="-")

    sweep = sub.add_parser("sweep", help="run several configs and schemes")
    _common(sweep, multi_config=True)
    sweep.add_argument("--out", default=".", help="output directory")
    return parser


def _overrides(args) -> dict:
    out = {
        "base_seed": args.seed,
        "sigma_l2": args.sigma_l2,
        "sigma_a2": args.sigma_a2,
        "replications": args.replications,
    }
    if args.delta_q is not None:
        out["delta_q_l"] = out["delta_q_a"] = args.delta_q
    return out


def _config(path, args, scheme=None) -> ExperimentConfig:
    cfg = load_config(path) if path else ExperimentConfig()
    return cfg.replace(scheme=scheme, **_overrides(args))


def _write_text(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_run(args) -> int:
    cfg = _config(args.config, args, args.scheme)
    metrics = run_experiment(cfg)
    if args.out == "-":
        sys.stdout.write(metrics_csv_text(metrics))
    else:
        emit_csv(metrics, args.out)
    return EXIT_OK


def cmd_weights(args) -> int:
    if args.sigma_l2 <= 0:
        raise ConfigError("--sigma-l2 must be positive")
    rows = weight_surface(args.ratio_a1, args.ratio_a2, args.n_a, args.sigma_l2**0.5)
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="", encoding="utf-8")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SURFACE_HEADER)
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _config(args.config, args, args.scheme)
    _write_text(pac_report_for(cfg).as_text() + "\n", args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    configs = args.config or [None]
    schemes = args.scheme or [None]
    # Validate everything before the first run.
    jobs = []
    for path in configs:
        for scheme in schemes:
            cfg = _config(path, args, scheme)
            stem = Path(path).stem if path else "default"
            jobs.append((cfg, Path(args.out) / f"{stem}_{cfg.scheme}.csv"))
    Path(args.out).mkdir(parents=True, exist_ok=True)
    for cfg, target in jobs:
        emit_csv(run_experiment(cfg), target)
        print(target)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "weights": cmd_weights, "bounds": cmd_bounds, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except OSError as exc:
        print(f"commpac: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:  # ConfigError included
        print(f"commpac: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
