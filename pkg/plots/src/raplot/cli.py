"""Command line: raplot KIND RUN_DIR --out IMAGE [--iterations 0,2,...]."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import MissingColumn, PlotSpec, render


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="raplot")
    ap.add_argument("kind", choices=["phase2d", "traj3d", "costs"])
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--iterations", type=str, default=None,
                    help="comma-separated iteration indices to overlay")
    args = ap.parse_args(argv)
    iters = None
    if args.iterations:
        iters = [int(tok) for tok in args.iterations.split(",") if tok]
    try:
        render(PlotSpec(args.run_dir, args.kind, args.out, iterations=iters))
    except (MissingColumn, FileNotFoundError, ValueError) as exc:
        print(f"raplot: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
