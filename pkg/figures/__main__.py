"""Render the standard figures from the shipped experiment bundles.

Usage: python -m figures [--bundles DIR] [--out DIR] [--format {png,svg}]
"""
from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg", force=True)

from . import SchemaError, bundle_figure_specs, render  # noqa: E402


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="figures", description=__doc__.splitlines()[0])
    ap.add_argument("--bundles", default="bundles", help="bundle root directory")
    ap.add_argument("--out", default="figures/out", help="output directory")
    ap.add_argument("--format", default="png", choices=("png", "svg"))
    args = ap.parse_args(argv)
    try:
        for spec in bundle_figure_specs(args.bundles, args.out, args.format):
            path = render(spec)
            print(f"wrote {path}")
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
