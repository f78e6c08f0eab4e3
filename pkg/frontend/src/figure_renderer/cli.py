"""``hblab-render``: draw a phase portrait from trajectory CSV files.

Exit codes: 0 rendered; 2 input problem (missing file, schema mismatch,
bad flags).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .renderer import DEFAULT_WINDOW, RenderSpec, SchemaMismatch, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hblab-render",
        description="Render trajectory CSVs as a phase portrait with "
                    "hyperbola/level-set overlays.",
    )
    parser.add_argument("--inputs", nargs="+", required=True, type=Path,
                        help="trajectory CSV files (versioned schema)")
    parser.add_argument("--out", required=True, type=Path,
                        help="output image path (.png or .svg)")
    parser.add_argument("--window", nargs=4, type=float,
                        metavar=("XMIN", "XMAX", "YMIN", "YMAX"),
                        default=list(DEFAULT_WINDOW))
    parser.add_argument("--level-sets", action="store_true",
                        help="overlay objective level sets")
    parser.add_argument("--no-hyperbola", action="store_true")
    parser.add_argument("--no-markers", action="store_true")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = RenderSpec(
            inputs=args.inputs,
            output=args.out,
            window=tuple(args.window),
            hyperbola=not args.no_hyperbola,
            level_sets=args.level_sets,
            markers=not args.no_markers,
            dpi=args.dpi,
        )
        result = render(spec)
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (SchemaMismatch, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.output} ({result.series_count} series, "
          f"points per input: {result.points_per_series})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
