"""Command-line figure renderer: cfmimo-plot."""

import argparse
import sys

from .render import FIGURES, FigureSpec, render


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cfmimo-plot",
        description="Render antenna-sweep SE figures from a cfmimo results.csv",
    )
    parser.add_argument("--input", required=True, help="results.csv path")
    parser.add_argument("--figure", required=True, choices=sorted(FIGURES))
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    args = parser.parse_args(argv)
    path = render(FigureSpec(input_csv=args.input, figure=args.figure, output=args.out))
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
