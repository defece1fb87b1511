"""Command line: smpc-render --kind K --in PATH... --out PATH."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, RenderInputError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smpc-render",
        description="Render a figure from sinkhorn-mpc CSV outputs.",
    )
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument(
        "--in", dest="inputs", required=True, nargs="+", help="input CSV path(s)"
    )
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument(
        "--no-markers", action="store_true",
        help="suppress initial/steady/desired state markers",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            kind=args.kind, inputs=tuple(args.inputs), markers=not args.no_markers
        )
        out = render(spec, args.out)
    except RenderInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
