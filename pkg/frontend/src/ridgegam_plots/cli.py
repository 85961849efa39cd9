"""Command-line entry point: ``ridgegam-plots render --csv ... --var ... --out ...``."""
import argparse
import sys

from .render import FIELD_VARS, PlotSpec, render_contours


def build_parser():
    parser = argparse.ArgumentParser(prog="ridgegam-plots")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("render", help="render one contour figure")
    r.add_argument("--csv", required=True, help="field CSV (x1,x2,f,df_dx1,df_dx2)")
    r.add_argument("--var", required=True, choices=FIELD_VARS)
    r.add_argument("--out", required=True, help="output PNG path")
    r.add_argument("--points", default=None,
                   help="training-point CSV; default: sibling points.csv")
    r.add_argument("--vmin", type=float, default=None)
    r.add_argument("--vmax", type=float, default=None)
    r.add_argument("--levels", type=int, default=21)
    r.add_argument("--dpi", type=int, default=100)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    window = None
    if (args.vmin is None) != (args.vmax is None):
        print("error: --vmin and --vmax must be given together",
              file=sys.stderr)
        return 2
    if args.vmin is not None:
        window = (args.vmin, args.vmax)
    spec = PlotSpec(csv_path=args.csv, var=args.var, out_path=args.out,
                    points_path=args.points, scale_window=window,
                    levels=args.levels, dpi=args.dpi)
    try:
        render_contours(spec)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
