"""Command-line front end.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
precondition refused (method not admissible for the geometry).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io
from .forward import GeometryError
from .pipeline import (
    ConfigError,
    compute_metrics,
    load_config,
    run_benchmark,
    run_reconstruct,
    run_simulate,
)
from .stage1 import PreconditionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="flat key=value configuration file")
    p.add_argument("--method", choices=["sine", "hankel", "naive", "point"], help="stage-1 method")
    p.add_argument("--noise", type=float, metavar="LEVEL", help="noise std as a fraction of max|data|")
    p.add_argument("--seed", type=int, metavar="N", help="noise seed")
    p.add_argument("--out", metavar="DIR", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circpat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate detector data and ground-truth means")
    _common(p)

    p = sub.add_parser("reconstruct", help="run stage 1 and stage 2 on simulated data")
    _common(p)
    p.add_argument("--data", metavar="DIR", help="directory with simulate output (default: --out)")
    p.add_argument("--skip-stage1", action="store_true", help="backproject the ground-truth means directly")

    p = sub.add_parser("benchmark", help="time reconstruction for doubling grid sizes")
    _common(p)
    p.add_argument("--base-n", type=int, default=24, metavar="N")
    p.add_argument("--steps", type=int, default=3, help="number of grid sizes")

    p = sub.add_parser("metrics", help="compare two grid files")
    p.add_argument("reconstructed", metavar="A", help="grid file to assess")
    p.add_argument("reference", metavar="B", help="reference grid file")
    p.add_argument("--out", metavar="DIR", help="also write metrics.txt here")
    return parser


def _overrides(args) -> dict:
    return {"method": args.method, "noise": args.noise, "seed": args.seed, "out": args.out}


def _print_report(values: dict):
    for key, value in values.items():
        print(f"{key}={'undefined' if value is None else value}")


def _dispatch(args) -> int:
    if args.command == "metrics":
        a, _ = io.read_grid(args.reconstructed)
        b, _ = io.read_grid(args.reference)
        try:
            report = compute_metrics(a, b)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        _print_report(report)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            text = "".join(f"{k}={'undefined' if v is None else v}\n" for k, v in report.items())
            (Path(args.out) / "metrics.txt").write_text(text)
        return EXIT_OK

    cfg = load_config(args.config, **_overrides(args))
    if args.command == "simulate":
        result = run_simulate(cfg)
        print(f"geometry verdict: {result['verdict']} (admissible: {', '.join(result['admissible'])})")
        for name, path in result["files"].items():
            print(f"wrote {name}: {path}")
        return EXIT_OK
    if args.command == "reconstruct":
        report = run_reconstruct(cfg, data_dir=args.data, skip_stage1=args.skip_stage1)
        _print_report(report.values)
        return EXIT_OK
    report = run_benchmark(args.base_n, args.steps, method=cfg.method.method.value, threads=1,
                           base=cfg.geometry)
    _print_report(report.values)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "benchmark.txt").write_text(report.to_text())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return _dispatch(args)
    except PreconditionError as exc:
        print(f"circpat: refused: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ConfigError, GeometryError, io.HeaderError, FileNotFoundError) as exc:
        print(f"circpat: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
