"""The ``plot`` command: metrics, topology, and demand figures from files.

Exit codes: 0 success, 2 for anything wrong with inputs or destinations
(missing file, schema mismatch, unwritable output).
"""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, SchemaError, render

EXIT_OK = 0
EXIT_USAGE = 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="plot", description="render stocksync output files as figures"
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="consensus-error curves from series CSVs")
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   metavar="CSV", help="series file (repeat per strategy)")
    p.add_argument("--column", choices=("apmae", "capmae"), default="apmae")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(kind="metric-curves")

    p = sub.add_parser("topology", help="coupling diagram from a topology JSON")
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   metavar="JSON")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(kind="topology")

    p = sub.add_parser("demand", help="weekly demand profile from a scenario config")
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   metavar="TOML")
    p.add_argument("--title")
    p.add_argument("--out", required=True)
    p.set_defaults(kind="demand-profile")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    options = {}
    if getattr(args, "column", None):
        options["column"] = args.column
    if args.title:
        options["title"] = args.title
    try:
        spec = FigureSpec(inputs=args.inputs, kind=args.kind, out=args.out,
                          options=options)
        stats = render(spec)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    detail = ", ".join(f"{k}={v}" for k, v in stats.items() if k != "out")
    print(f"wrote {stats['out']} ({detail})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
