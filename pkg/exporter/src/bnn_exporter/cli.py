"""CLI: train one architecture preset and export its bundle.

    export-bnn --arch PRESET --out DIR --seed N --epochs N
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .fold import ExportError
from .presets import PRESETS
from .train import TrainSpec, train
from .export import export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="export-bnn")
    parser.add_argument("--arch", required=True, choices=sorted(PRESETS))
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=40)
    args = parser.parse_args(argv)

    try:
        ckpt = train(TrainSpec(arch=args.arch, epochs=args.epochs, seed=args.seed))
    except RuntimeError as e:
        print(f"export-bnn: {e}", file=sys.stderr)
        return 1
    try:
        summary = export(ckpt, args.out)
    except ExportError as e:
        print(f"export-bnn: {e}", file=sys.stderr)
        return 1
    print(f"{args.arch}: train {summary['train_accuracy']:.4f}, "
          f"test {summary['test_accuracy']:.4f}, "
          f"integer path {summary['integer_path_test_accuracy']:.4f}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
