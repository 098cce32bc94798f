"""Command-line front end.

    simulate accuracy|hardware|all --model DIR --dataset DIR --hw FILE
             --input-precision LO..HI --adc LO..HI --out DIR
             [--seed N] [--workers N] [--subsample N]

Exit codes: 0 ok, 2 bad arguments, 3 I/O error, 4 invariant violation.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .costmodel import ConfigError
from .model_ir import ModelFormatError
from .plots import emit_plots
from .sweep import InvariantViolation, SweepSpec, run_accuracy_sweep, \
    run_hardware_sweep, validate_outputs

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_IO = 3
EXIT_INVARIANT = 4


def _parse_range(text: str) -> tuple[int, ...]:
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            values = tuple(range(int(lo), int(hi) + 1))
        else:
            values = (int(text),)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; use LO..HI")
    if not values:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Binarized-network crossbar simulator: accuracy and "
                    "hardware sweeps over input precision and ADC resolution.")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in ("accuracy", "hardware", "all"):
        p = sub.add_parser(mode)
        p.add_argument("--model", required=True, type=Path,
                       help="model bundle directory (or descriptor JSON for "
                            "hardware sweeps)")
        p.add_argument("--dataset", type=Path,
                       help="dataset directory (accuracy sweeps)")
        p.add_argument("--hw", type=Path,
                       help="hardware config JSON (default: shipped fitted config)")
        p.add_argument("--input-precision", type=_parse_range, default=(1, 2, 3, 4, 5, 6, 7, 8),
                       metavar="LO..HI", help="input precision sweep range")
        p.add_argument("--adc", type=_parse_range, default=(3, 4, 5, 6, 7, 8),
                       metavar="LO..HI", help="ADC resolution sweep range")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--subsample", type=int, default=None,
                       help="evaluate at most N dataset samples")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    want_accuracy = args.mode in ("accuracy", "all")
    want_hardware = args.mode in ("hardware", "all")
    if want_accuracy and args.dataset is None:
        parser.error("accuracy sweeps require --dataset")
    if args.workers < 1:
        parser.error("--workers must be at least 1")
    if args.subsample is not None and args.subsample < 1:
        parser.error("--subsample must be at least 1")

    for path, needed in ((args.model, True),
                         (args.dataset, want_accuracy),
                         (args.hw, args.hw is not None)):
        if needed and path is not None and not path.exists():
            print(f"simulate: path does not exist: {path}", file=sys.stderr)
            return EXIT_IO

    try:
        spec = SweepSpec(
            model=args.model,
            dataset=args.dataset,
            hw_config=args.hw,
            b_range=args.input_precision,
            a_range=args.adc,
            out_dir=args.out,
            seed=args.seed,
            workers=args.workers,
            subsample=args.subsample,
        )
    except ValueError as e:
        print(f"simulate: {e}", file=sys.stderr)
        return EXIT_BAD_ARGS

    try:
        if want_accuracy:
            run_accuracy_sweep(spec)
        if want_hardware:
            run_hardware_sweep(spec)
        validate_outputs(spec.out_dir)
        emit_plots(spec.out_dir)
    except InvariantViolation as e:
        print(f"simulate: invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ModelFormatError, ConfigError, FileNotFoundError, OSError, ValueError) as e:
        print(f"simulate: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
