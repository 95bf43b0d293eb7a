"""`plots` command: render harness outputs into figures.

    plots rate-surface RATES.csv FIT.json -o fig.png
    plots cost-error SWEEP.csv -o fig.png
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FigureKind, FigureRequest, SchemaError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots",
                                     description="figures from harness outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    surface = sub.add_parser("rate-surface", help="two-panel rate surface")
    surface.add_argument("rates_csv", type=Path)
    surface.add_argument("fit_json", type=Path)
    surface.add_argument("-o", "--output", type=Path, required=True)

    cost = sub.add_parser("cost-error", help="error and cost panels")
    cost.add_argument("sweep_csv", type=Path)
    cost.add_argument("-o", "--output", type=Path, required=True)
    return parser


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    fmt = args.output.suffix.lstrip(".").lower() or "png"
    if args.command == "rate-surface":
        request = FigureRequest(FigureKind.RATE_SURFACE,
                                [args.rates_csv, args.fit_json], args.output, fmt)
    else:
        request = FigureRequest(FigureKind.COST_ERROR, [args.sweep_csv],
                                args.output, fmt)
    try:
        meta = render(request)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command == "cost-error":
        for method, slope in sorted((meta.get("slopes") or {}).items()):
            if slope is not None:
                print(f"cost slope {method}: {slope:.3f}")
    print(f"wrote {args.output}")
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
