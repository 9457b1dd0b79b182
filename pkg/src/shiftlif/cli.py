"""Command-line entry point: ``shiftlif <experiment> [--config PATH] [--seed N] [--out DIR] [--strict]``.

Exit codes: 0 success, 2 configuration error, 3 a check failed, 4 I/O error.
``SHIFTLIF_SEED`` and ``SHIFTLIF_OUT`` override the config file; explicit
flags override both.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import EXPERIMENTS, ExperimentConfig, load_config, parse_config
from .errors import ConfigError, ShiftLIFError, TrainingFault
from .experiments import RUNNERS
from .reports import RunWriter

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("shiftlif")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shiftlif", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT", required=True)
    helps = {
        "analyze": "quantization error, entropy and lemma checks on a membrane distribution",
        "train": "train one network on the synthetic task",
        "ablate-K": "accuracy versus precision factor K",
        "ablate-grid": "power-of-two versus uniform spike levels",
        "energy": "spike rates and energy estimates per neuron kind",
        "kernel-check": "shift-accumulate kernel against the float reference",
        "gen-data": "write the synthetic dataset as CSV",
    }
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="PATH", help="INI configuration file")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--strict", action="store_true", help="treat unknown config keys as errors")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config, strict=args.strict)
    else:
        cfg = parse_config("", "<defaults>", strict=args.strict)
    seed, out = args.seed, args.out
    if seed is None and os.environ.get("SHIFTLIF_SEED"):
        try:
            seed = int(os.environ["SHIFTLIF_SEED"])
        except ValueError as exc:
            raise ConfigError(f"SHIFTLIF_SEED is not an integer: {os.environ['SHIFTLIF_SEED']!r}") from exc
    if out is None and os.environ.get("SHIFTLIF_OUT"):
        out = os.environ["SHIFTLIF_OUT"]
    return cfg.with_overrides(seed=seed, out=out, kind=args.experiment)


def run(cfg: ExperimentConfig) -> int:
    """Execute ``cfg.kind`` and write its artifacts; returns the exit status."""
    try:
        writer = RunWriter(cfg.out)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", cfg.out, exc.strerror)
        return EXIT_IO
    try:
        failures = RUNNERS[cfg.kind](cfg, writer)
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except TrainingFault as exc:
        log.error("training fault: %s %s", exc, exc.diagnostics)
        failures = [str(exc)]
    try:
        writer.manifest(cfg.kind, cfg.resolved, "fail" if failures else "ok")
    except OSError as exc:
        log.error("cannot write manifest: %s", exc)
        return EXIT_IO
    for failure in failures:
        log.error("check failed: %s", failure)
    return EXIT_CHECK if failures else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except ShiftLIFError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = run(cfg)
    if status == EXIT_OK:
        print(f"{cfg.kind}: ok -> {cfg.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
