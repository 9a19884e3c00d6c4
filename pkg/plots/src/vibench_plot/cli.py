"""vibench-plot: render one paper-style figure from a harness CSV."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, EmptySelectionError, FigureSpec, MissingColumnsError, render


def parse_filters(pairs):
    filters = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise SystemExit(f"--filter expects column=value, got {pair!r}")
        key, value = pair.split("=", 1)
        filters[key] = value
    return filters


def build_parser():
    parser = argparse.ArgumentParser(prog="vibench-plot")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--csv", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument(
        "--filter",
        action="append",
        default=[],
        metavar="COL=VALUE",
        help="keep only rows whose column equals the value; repeatable",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        kind=args.kind,
        csv_path=args.csv,
        out_path=args.out,
        filters=parse_filters(args.filter),
    )
    try:
        out = render(spec)
    except MissingColumnsError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except EmptySelectionError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
