"""A2(r)/(pi r^2) over a range of radii, with the 1 + c/r fit.

    python scripts/a2_trend.py --radii 2 3 4 6 9 12
"""
import argparse
import math

import numpy as np

from emptyball.pde import a2_estimate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--radii", type=float, nargs="+", default=[2, 3, 4, 6, 9, 12])
    ap.add_argument("--spacing", type=float, default=0.02)
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()

    ratios = []
    print(f"{'r':>6} {'A2':>12} {'ratio':>8} {'residual':>10}")
    for r in args.radii:
        lc = a2_estimate(r, spacing=args.spacing, levels=args.levels)
        q = lc.extras["ratio_to_area"]
        ratios.append(q)
        print(f"{r:6g} {lc.value:12.5f} {q:8.4f} {lc.residual / (math.pi * r * r):10.2e}")
    c = np.polyfit(1 / np.asarray(args.radii), np.asarray(ratios) - 1, 1)
    print(f"fit: ratio - 1 = {c[0]:.3f}/r + {c[1]:.4f}")


if __name__ == "__main__":
    main()
