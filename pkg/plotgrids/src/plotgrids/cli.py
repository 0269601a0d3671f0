"""Command line front end: ``plot-grids --inputs <glob> --out <file>``."""

from __future__ import annotations

import argparse
import glob
import sys
from pathlib import Path

from .render import GridFigureSpec, GridInputError, render_grid


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-grids",
        description="Render stability-grid CSVs into a heatmap panel figure.",
    )
    parser.add_argument("--inputs", required=True,
                        help="glob matching grid_<policy>_<load>.csv files")
    parser.add_argument("--out", required=True, help="output image path (png, pdf, svg)")
    parser.add_argument("--log-scale", action="store_true",
                        help="color backlog on a log scale")
    parser.add_argument("--annotate-excursion", action="store_true",
                        help="print each cell's maximum excursion inside it")
    args = parser.parse_args(argv)

    paths = sorted(Path(p) for p in glob.glob(args.inputs))
    if not paths:
        print(f"no files match {args.inputs!r}", file=sys.stderr)
        return 1
    spec = GridFigureSpec(
        inputs=paths,
        output=Path(args.out),
        log_scale=args.log_scale,
        annotate_excursion=args.annotate_excursion,
    )
    try:
        output = render_grid(spec)
    except (GridInputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
