"""Command-line entry point: render one figure from a harness CSV.

Usage:
  hetcache-plots --input results.csv --family policy_sweep --out fig.png

Exit codes: 0 success, 1 runtime error, 2 usage/schema error.
"""
from __future__ import annotations

import argparse
import sys

from .figures import FAMILIES, FigureSpec, SchemaError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetcache-plots",
        description="Render a figure from a hetcache sweep/trace/gap CSV.",
    )
    parser.add_argument("--input", required=True, help="input CSV path")
    parser.add_argument("--family", required=True, choices=FAMILIES)
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--xlabel", default=None)
    parser.add_argument("--ylabel", default=None)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    spec = FigureSpec(
        input_csv=args.input,
        family=args.family,
        output=args.out,
        xlabel=args.xlabel,
        ylabel=args.ylabel,
    )
    try:
        out = render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort reporting
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
